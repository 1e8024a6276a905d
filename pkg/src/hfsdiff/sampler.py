"""Predictor-corrector posterior sampling with gradient data consistency.

One predictor step (reverse-SDE Euler-Maruyama) and ``M_corr`` Langevin
corrector steps run for each ``i = N-1, ..., 0``. For HFS variants every score,
drift and noise term is projected with F_h, so without data consistency the
low band of the initial image is carried through unchanged; the data term
``G = A^H (A x - y)`` is applied unprojected.

Several chains can share one call: ``x`` may carry a leading batch axis, with
one :class:`RngStream` per chain. Norms and step sizes are per chain, and no
arithmetic mixes chains, so a chain's result does not depend on its batch.
"""
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import field as fc
from .diffusion import kernel_coeffs
from .errors import DivergenceError, InitializationError, ParameterError, RangeError
from .metrics import nmse as _nmse
from .rng import RngStream

NORM_FLOOR = 1e-12
SAMPLER_STREAM = 0x5A3B


@dataclass
class SamplerConfig:
    lambda1: float = 1.0
    lambda2: float = 1.0
    snr: float = 0.16
    N: int = 1000
    M_corr: int = 1
    dc_enabled: bool = True
    seed: int = 0
    trace: bool = True

    def __post_init__(self):
        if self.lambda1 < 0:
            raise ParameterError(f"lambda1 must be >= 0, got {self.lambda1}")
        if self.lambda2 <= 0:
            raise ParameterError(f"lambda2 must be > 0, got {self.lambda2}")
        if self.snr <= 0:
            raise ParameterError(f"snr must be > 0, got {self.snr}")
        if int(self.N) != self.N or self.N < 1:
            raise ParameterError(f"N must be a positive integer, got {self.N}")
        if int(self.M_corr) != self.M_corr or self.M_corr < 0:
            raise ParameterError(f"M_corr must be a nonnegative integer, got {self.M_corr}")
        self.N = int(self.N)
        self.M_corr = int(self.M_corr)

    def as_dict(self):
        return asdict(self)


@dataclass
class SamplerState:
    """Current iterate. ``i`` is the schedule index of ``x`` and ``k`` the corrector count."""

    x: np.ndarray
    i: int
    k: int
    rng: object
    warnings: list = field(default_factory=list)

    @property
    def batched(self):
        return isinstance(self.rng, (list, tuple))


@dataclass
class ReconReport:
    reconstruction: np.ndarray
    trace: list
    wall_time: float
    config: dict
    warnings: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)

    TRACE_COLUMNS = ("i", "k", "norm_g", "norm_G", "nmse")


@dataclass(frozen=True)
class Problem:
    """Everything a step needs besides the iterate."""

    y: np.ndarray
    csm: fc.CoilSet
    mu: fc.SamplingMask
    model: object
    spec: object
    cfg: SamplerConfig
    m: fc.FrequencyMask


def _problem(y, csm, mu, model, spec, cfg, m=None):
    y = fc.as_field(y, "y")
    if y.ndim == 2:
        y = y[None]
    if y.shape[-3] != csm.n or tuple(y.shape[-2:]) != tuple(csm.shape):
        raise ParameterError(f"data {y.shape} does not match coil maps {csm.maps.shape}")
    if tuple(mu.shape) != tuple(csm.shape):
        raise ParameterError(f"sampling mask {mu.shape} does not match grid {csm.shape}")
    if cfg.N > spec.schedule.N:
        raise RangeError(f"sampler N={cfg.N} exceeds schedule N={spec.schedule.N}")
    if spec.variant.is_vp and spec.schedule.beta_max / cfg.N >= 1:
        raise ParameterError(f"sampler N={cfg.N} gives discrete beta >= 1; need N > {spec.schedule.beta_max:g}")
    if m is None:
        m = spec.freq_mask(csm.shape)
    elif not spec.is_hfs:
        m = fc.FrequencyMask(0, csm.shape, spec.axis)
    return Problem(y, csm, mu, model, spec, cfg, m)


def _rngs(state):
    return list(state.rng) if state.batched else [state.rng]


def _chains(x):
    return x.reshape((-1,) + x.shape[-2:])


def _norms(x):
    return np.array([np.linalg.norm(c) for c in _chains(x)])


def _per_chain(values, x):
    return np.asarray(values, dtype=float).reshape(x.shape[:-2] + (1, 1))


def _draw(state, shape):
    """One full-space complex normal field per chain."""
    z = [r.complex_normal(shape[-2:]) for r in _rngs(state)]
    return np.stack(z).reshape(shape)


def _dc_residual(x, p):
    """``G = sum_j csm_j^* F^-1 (M_u F(csm_j x) - y_j)``."""
    ax = fc.encode(x, p.csm, p.mu)
    return fc.adjoint(ax - p.y, p.csm, p.mu)


def _beta(p, i):
    return p.spec.schedule.beta_i(i, p.cfg.N)


def _ve_sigma2(p, i):
    return float(p.spec.schedule.sigma(i / p.cfg.N)) ** 2


def low_band_image(y, csm, m):
    """Coil-combined zero-filled image of the low band: ``sum_j csm_j^* F^-1 (M_l y_j)``."""
    return np.sum(np.conj(csm.maps) * fc.ifft2c(y * m.low()), axis=-3)


def init_state(y, csm, m, spec, cfg, rng=None, suppress_noise=False):
    """Terminal iterate ``x_N``.

    HFS variants start from the low-band image plus noise confined to the high
    band (scaled by the terminal kernel deviation for HFS-VE). Full-space
    variants start from pure noise. ``rng`` may be a list of streams to start
    several chains at once.
    """
    if rng is None:
        rng = RngStream(cfg.seed, SAMPLER_STREAM)
    y = fc.as_field(y, "y")
    if y.ndim == 2:
        y = y[None]
    n_chains = len(rng) if isinstance(rng, (list, tuple)) else None
    shape = tuple(csm.shape) if n_chains is None else (n_chains,) + tuple(csm.shape)
    state = SamplerState(np.zeros(shape, dtype=np.complex128), cfg.N, 0, rng)
    c1 = kernel_coeffs(spec, 1.0)
    scale = np.sqrt(c1.var) if not spec.variant.is_vp else 1.0
    if spec.is_hfs:
        if m.n_l > 0 and not np.any(y * m.low()):
            raise InitializationError("low band of the acquired data is empty; HFS start needs it")
        base = np.broadcast_to(low_band_image(y, csm, m), shape)
        noise = 0.0 if suppress_noise else scale * fc.apply_fh(_draw(state, shape), m)
        state.x = base + noise
    else:
        state.x = np.zeros(shape, dtype=np.complex128) if suppress_noise else scale * _draw(state, shape)
    return state


def _check(x, where, trace):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"non-finite iterate at step {where}", step=where, trace=trace)


def _predictor(state, p):
    """x_i from x_{i+1} (explicit Euler-Maruyama; score at t_{i+1})."""
    i = state.i - 1
    x = state.x
    t = (i + 1) / p.cfg.N
    g = fc.apply_fh(p.model.evaluate(x, t), p.m)
    G = _dc_residual(x, p)
    ng, nG = _norms(g), _norms(G)
    if p.cfg.dc_enabled:
        eps = np.where(nG > NORM_FLOOR, p.cfg.lambda1 * ng / np.maximum(nG, NORM_FLOOR), 0.0)
    else:
        eps = np.zeros_like(ng)
    z = _draw(state, x.shape)
    hz = fc.apply_fh(z, p.m)
    drift = g - _per_chain(eps, x) * G
    if p.spec.variant.is_vp:
        b = _beta(p, i + 1)
        x_new = x + 0.5 * b * fc.apply_fh(x, p.m) + b * drift + np.sqrt(b) * hz
    else:
        d2 = _ve_sigma2(p, i + 1) - _ve_sigma2(p, i)
        x_new = x + d2 * drift + np.sqrt(d2) * hz
    return SamplerState(x_new, i, 0, state.rng, state.warnings), ng, nG


def _corrector(state, p):
    """One annealed Langevin sub-step at schedule index i (score at t_i)."""
    i = state.i
    x = state.x
    g = fc.apply_fh(p.model.evaluate(x, i / p.cfg.N), p.m)
    G = _dc_residual(x, p)
    ng, nG = _norms(g), _norms(G)
    z = _draw(state, x.shape)
    nz = _norms(z)
    if np.any(ng < NORM_FLOOR):
        state.warnings.append(f"score norm below floor at i={i}, k={state.k + 1}")
    alpha = 1.0 - _beta(p, i) if p.spec.variant.is_vp else 1.0
    eps1 = 2.0 * alpha * (p.cfg.snr * nz / np.maximum(ng, NORM_FLOOR)) ** 2
    if p.cfg.dc_enabled:
        eps2 = np.where(nG > NORM_FLOOR, ng / (p.cfg.lambda2 * np.maximum(nG, NORM_FLOOR)), 0.0)
    else:
        eps2 = np.zeros_like(ng)
    e1 = _per_chain(eps1, x)
    x_new = x + e1 * (g - _per_chain(eps2, x) * G) + np.sqrt(2.0 * e1) * fc.apply_fh(z, p.m)
    return SamplerState(x_new, i, state.k + 1, state.rng, state.warnings), ng, nG


def predictor_step(state, y, csm, mu, model, spec, cfg, m=None):
    if state.i < 1:
        raise RangeError("no predictor step left: state is already at index 0")
    new, _, _ = _predictor(state, _problem(y, csm, mu, model, spec, cfg, m))
    _check(new.x, new.i, [])
    return new


def corrector_step(state, y, csm, mu, model, spec, cfg, m=None):
    new, _, _ = _corrector(state, _problem(y, csm, mu, model, spec, cfg, m))
    _check(new.x, new.i, [])
    return new


def _row(i, k, ng, nG, x, x_ref):
    err = np.nan if x_ref is None else [_nmse(c, x_ref) for c in _chains(x)]
    if ng.size == 1:
        return (i, k, float(ng[0]), float(nG[0]), err if x_ref is None else err[0])
    return (i, k, ng.tolist(), nG.tolist(), err)


def run(state, y, csm, mu, model, spec, cfg, m=None, x_ref=None, snapshot_every=0, snapshots=None):
    """Run all remaining steps from ``state``; returns (final state, trace rows).

    With ``snapshot_every = S > 0`` the iterate after each predictor step with
    ``i % S == 0`` is stored in ``snapshots[i]``.
    """
    p = _problem(y, csm, mu, model, spec, cfg, m)
    trace = []
    while state.i > 0:
        state, ng, nG = _predictor(state, p)
        _check(state.x, state.i, trace)
        if cfg.trace:
            trace.append(_row(state.i, 0, ng, nG, state.x, x_ref))
        if snapshot_every and snapshots is not None and state.i % snapshot_every == 0:
            snapshots[state.i] = state.x.copy()
        for _ in range(cfg.M_corr):
            state, ng, nG = _corrector(state, p)
            _check(state.x, state.i, trace)
            if cfg.trace:
                trace.append(_row(state.i, state.k, ng, nG, state.x, x_ref))
    return state, trace


def reconstruct(y, csm, mu, m, model, spec, cfg, x_ref=None, rng=None, snapshot_every=0):
    """Full sampling run; ``rng`` defaults to the stream derived from ``cfg.seed``.

    Passing a list of streams samples that many chains in one batch.
    """
    t0 = time.perf_counter()
    p = _problem(y, csm, mu, model, spec, cfg, m)
    state = init_state(p.y, csm, p.m, spec, cfg, rng=rng)
    snaps = {}
    state, trace = run(state, p.y, csm, mu, model, spec, cfg, p.m, x_ref, snapshot_every, snaps)
    wall = time.perf_counter() - t0
    return ReconReport(state.x, trace, wall, cfg.as_dict(), list(state.warnings), snaps)


def chain_streams(seeds):
    """Per-chain sampler streams, identical to what ``reconstruct`` uses for each seed alone."""
    return [RngStream(int(s), SAMPLER_STREAM) for s in seeds]
