"""Noise schedules, perturbation kernels and the forward Markov chain.

Four variants share one interface. The full-space ones (VP, VE) diffuse every
Fourier mode; the HFS ones diffuse only the high band selected by a
:class:`~hfsdiff.field.FrequencyMask` and leave the low band untouched.

For the VP family the kernel has mean coefficient ``a = e^k`` and variance
``v = 1 - e^{2k}`` with ``k(t) = -t^2 (b_max - b_min) / 4 - t b_min / 2``.
For the VE family ``a = 1`` and ``v = sigma(t)^2 - sigma(0)^2`` with a
geometric ``sigma``. Because F_h is idempotent, ``exp(k F_h) = I + (e^k - 1) F_h``,
so the HFS kernels are the full-space ones restricted to the high band.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import field as fc
from .errors import ParameterError, RangeError
from .kernels import _accel
from .kernels import chain as _chain
from .kernels import philox as _ph


class Variant(str, Enum):
    VP = "VP"
    VE = "VE"
    HFS_VP = "HFS_VP"
    HFS_VE = "HFS_VE"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ParameterError(f"unknown variant {name!r}") from None

    @property
    def is_hfs(self):
        return self in (Variant.HFS_VP, Variant.HFS_VE)

    @property
    def is_vp(self):
        return self in (Variant.VP, Variant.HFS_VP)


@dataclass(frozen=True)
class BetaSchedule:
    """Linear ``beta(t)`` for the VP family and geometric ``sigma(t)`` for VE."""

    beta_min: float = 0.1
    beta_max: float = 20.0
    N: int = 1000
    sigma_min: float = 0.1
    sigma_max: float = 348.0

    def __post_init__(self):
        if not 0 < self.beta_min < self.beta_max:
            raise ParameterError(f"need 0 < beta_min < beta_max, got {self.beta_min}, {self.beta_max}")
        if int(self.N) != self.N or self.N < 1:
            raise ParameterError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        if self.beta_max / self.N >= 1:
            raise ParameterError(f"beta_max / N = {self.beta_max / self.N} must be below 1")
        if not 0 < self.sigma_min < self.sigma_max:
            raise ParameterError(f"need 0 < sigma_min < sigma_max, got {self.sigma_min}, {self.sigma_max}")

    def beta(self, t):
        return self.beta_min + np.asarray(t, dtype=float) * (self.beta_max - self.beta_min)

    def discrete_betas(self, n=None):
        """``beta_i = beta(i / n) / n`` for i = 1..n (index 0 of the result is i = 1)."""
        n = self.N if n is None else int(n)
        if n < 1:
            raise ParameterError(f"step count must be >= 1, got {n}")
        i = np.arange(1, n + 1, dtype=float)
        return self.beta(i / n) / n

    def beta_i(self, i, n=None):
        n = self.N if n is None else int(n)
        if not 0 <= i <= n:
            raise RangeError(f"schedule index {i} outside [0, {n}]")
        return float(self.beta(i / n) / n)

    def alpha_i(self, i, n=None):
        return 1.0 - self.beta_i(i, n)

    def sigma(self, t):
        return self.sigma_min * (self.sigma_max / self.sigma_min) ** np.asarray(t, dtype=float)


@dataclass(frozen=True)
class KernelCoeffs:
    """Perturbation kernel on the diffused subspace: ``x_t = a x_0 + sqrt(v) z``."""

    mean_coeff: float
    var: float
    log_mean: float
    variant: Variant


@dataclass(frozen=True)
class DiffusionSpec:
    """Variant plus schedule. ``n_l`` is required by HFS variants and ignored otherwise."""

    variant: Variant = Variant.HFS_VP
    schedule: BetaSchedule = field(default_factory=BetaSchedule)
    n_l: int = None
    axis: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if self.variant.is_hfs:
            if self.n_l is None:
                raise ParameterError(f"{self.variant.value} requires a low-frequency width n_l")
            if int(self.n_l) != self.n_l or self.n_l < 0:
                raise ParameterError(f"n_l must be a nonnegative integer, got {self.n_l}")
            object.__setattr__(self, "n_l", int(self.n_l))
        if self.axis not in (0, 1):
            raise ParameterError(f"axis must be 0 or 1, got {self.axis}")

    @property
    def is_hfs(self):
        return self.variant.is_hfs

    def freq_mask(self, shape):
        """Band split for ``shape``; full-space variants get the empty low band (F_h = I)."""
        n_l = self.n_l if self.is_hfs else 0
        return fc.FrequencyMask(n_l, shape, self.axis)

    def to_dict(self):
        s = self.schedule
        return {"variant": self.variant.value, "beta_min": s.beta_min, "beta_max": s.beta_max,
                "sigma_min": s.sigma_min, "sigma_max": s.sigma_max, "N": s.N,
                "n_l": self.n_l, "axis": self.axis}

    @classmethod
    def from_dict(cls, d):
        known = {"variant", "beta_min", "beta_max", "sigma_min", "sigma_max", "N", "n_l", "axis"}
        extra = set(d) - known
        if extra:
            raise ParameterError(f"unknown diffusion fields: {sorted(extra)}")
        sched = BetaSchedule(**{k: d[k] for k in ("beta_min", "beta_max", "N", "sigma_min", "sigma_max") if k in d})
        return cls(d.get("variant", "HFS_VP"), sched, d.get("n_l"), d.get("axis", 0))


def _check_time(t):
    t = float(t)
    if not 0.0 <= t <= 1.0 or not np.isfinite(t):
        raise RangeError(f"time {t} outside [0, 1]")
    return t


def log_mean(spec, t):
    t = _check_time(t)
    s = spec.schedule
    if spec.variant.is_vp:
        return -0.25 * t * t * (s.beta_max - s.beta_min) - 0.5 * t * s.beta_min
    return 0.0


def kernel_coeffs(spec, t):
    """Coefficients on the diffused subspace (the whole space for VP/VE).

    On the low band of HFS variants the kernel is the identity (a=1, v=0).
    """
    t = _check_time(t)
    k = log_mean(spec, t)
    if spec.variant.is_vp:
        var = -np.expm1(2.0 * k)
    else:
        s = spec.schedule
        var = s.sigma_min ** 2 * np.expm1(2.0 * t * np.log(s.sigma_max / s.sigma_min))
    return KernelCoeffs(float(np.exp(k)), float(var), float(k), spec.variant)


def perturb_with(x0, t, spec, z):
    """Kernel sample for an explicit noise field ``z``."""
    x0 = fc.as_field(x0, "x0")
    z = fc.as_field(z, "z")
    c = kernel_coeffs(spec, t)
    if c.var == 0.0 and c.mean_coeff == 1.0:
        return x0.copy()
    if spec.is_hfs:
        # F_l x0 + a F_h x0 is exp(k F_h) x0; written as a split so n_l = 0 gives a * x0 bit for bit
        m = spec.freq_mask(x0.shape[-2:])
        mean = fc.apply_fl(x0, m) + c.mean_coeff * fc.apply_fh(x0, m)
        return mean + np.sqrt(c.var) * fc.apply_fh(z, m)
    return c.mean_coeff * x0 + np.sqrt(c.var) * z


def perturb(x0, t, spec, rng):
    """Draw ``x(t) | x0`` for any variant."""
    x0 = fc.as_field(x0, "x0")
    return perturb_with(x0, t, spec, rng.complex_normal(x0.shape))


def forward_chain(x0, spec, steps, rng, betas=None):
    """Run ``steps`` iterations of the discrete VP-family chain on the high band.

    ``x_i = F_l x_{i-1} + sqrt(1 - b_i) F_h x_{i-1} + sqrt(b_i) F_h z_{i-1}``.
    Full-space VP is the same chain with an empty low band. ``betas`` overrides
    the schedule's discrete betas (used for degenerate schedules); leading axes
    of ``x0`` are independent samples.

    Noise is drawn in centered k-space. Since the transform is unitary, a
    standard complex normal field has the same law in either domain.
    """
    if not spec.variant.is_vp:
        raise ParameterError("the forward chain is defined for the VP family only")
    steps = int(steps)
    if steps > spec.schedule.N:
        raise RangeError(f"steps={steps} exceeds schedule length N={spec.schedule.N}")
    if steps < 0:
        raise RangeError(f"steps must be nonnegative, got {steps}")
    x0 = fc.as_field(x0, "x0")
    if betas is None:
        b = spec.schedule.discrete_betas()[:steps]
    else:
        b = np.asarray(betas, dtype=float)[:steps]
        if b.shape[0] != steps or np.any(b < 0) or np.any(b >= 1):
            raise ParameterError("betas must provide `steps` values in [0, 1)")
    c1 = np.sqrt(1.0 - b)
    c2 = np.sqrt(b)

    shape = x0.shape
    m = spec.freq_mask(shape[-2:])
    xh = fc.fft2c(x0).reshape(-1, shape[-2] * shape[-1]).copy()
    high = m.high().ravel()
    n_draws = 2 * steps * xh.size
    if _accel.USE_NUMBA:
        starts, lens = _chain.high_runs(high)
        start = rng.advance_normals(n_draws)
        k0, k1 = rng.key_words
        s0, s1 = rng.stream_words
        _chain.hfs_chain_nb(xh, starts, lens, c1, c2, np.int64(start), k0, k1, s0, s1,
                            _ph.ZIG_K_I64, _ph.ZIG_W, _ph.ZIG_F)
    else:
        _chain.hfs_chain_np(xh, high, c1, c2, rng)
    return fc.ifft2c(xh.reshape(shape))
