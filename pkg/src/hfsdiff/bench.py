"""Desk-scale testbeds and the sweep, ablation and timing harnesses.

The Gaussian testbed pairs an independent-mode complex Gaussian prior with its
exact score, so the posterior is available in closed form and every sampler
result can be compared against ground truth without training anything.
"""
import csv
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import field as fc
from . import metrics
from .acquisition import acquire, make_phantom, make_undersampling_mask
from .diffusion import BetaSchedule, DiffusionSpec, Variant
from .errors import HfsError, ParameterError
from .rng import RngStream
from .sampler import SamplerConfig, chain_streams, reconstruct
from .score import GaussianPrior, GaussianScoreModel

CSV_COLUMNS = ("variant", "steps", "seed", "nmse", "psnr", "ssim", "wall_ms", "agg", "stat", "error")


@dataclass
class GaussianTestbed:
    prior: GaussianPrior
    x_true: np.ndarray
    csm: fc.CoilSet
    mu: fc.SamplingMask
    y: np.ndarray
    sigma_noise: float
    n_l: int
    schedule: BetaSchedule = field(default_factory=BetaSchedule)
    params: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.prior.shape

    def spec(self, variant="HFS_VP", n_l=None):
        return DiffusionSpec(variant, self.schedule, self.n_l if n_l is None else n_l)

    def model(self, spec):
        return GaussianScoreModel(self.prior, spec)

    def posterior_mean(self):
        return conjugate_posterior_mean(self.prior, self.csm, self.mu, self.y, self.sigma_noise)


def gaussian_prior_variances(n, width=None, peak=0.5, floor=1e-2):
    """Per-component variances ``peak * exp(-d^2 / (2 w^2)) + floor``, d the distance to DC."""
    width = n / 8 if width is None else width
    r = np.arange(n) - n // 2
    d2 = r[:, None] ** 2 + r[None, :] ** 2
    return peak * np.exp(-d2 / (2.0 * width * width)) + floor


def make_gaussian_testbed(n=16, factor=2, acs=4, n_l=4, seed=0, n_coils=1, sigma_noise=0.0,
                          floor=1e-2, peak=0.5, width=None, phantom="shepp_logan"):
    """Prior centered on a normalized phantom; ground truth is one prior draw.

    The truth is observed through a uniform line mask with a centered ACS block.
    """
    from .acquisition import make_csm

    rng = RngStream(seed, stream_id=0xBEDB)
    ph = make_phantom(phantom, n, n, rng.spawn(1)).image
    prior = GaussianPrior(fc.fft2c(ph), gaussian_prior_variances(n, width, peak, floor))
    x_true = prior.sample(rng.spawn(2))
    csm = make_csm(n_coils, n, n)
    mu = make_undersampling_mask("uniform", factor, acs, n)
    y = acquire(x_true, csm, mu, sigma_noise, rng.spawn(3))
    params = {"n": n, "factor": factor, "acs": acs, "n_l": n_l, "seed": seed, "n_coils": n_coils,
              "sigma_noise": sigma_noise, "floor": floor, "peak": peak, "width": width, "phantom": phantom}
    return GaussianTestbed(prior, x_true, csm, mu, y, sigma_noise, n_l, params=params)


def _dense_encoder(csm, mu):
    n = csm.shape[0] * csm.shape[1]
    basis = np.eye(n, dtype=np.complex128).reshape((n,) + tuple(csm.shape))
    cols = fc.encode(basis, csm, mu)
    keep = np.broadcast_to(mu.array(), cols.shape[1:])
    return cols[:, keep].T


def conjugate_posterior_mean(prior, csm, mu, y, sigma_noise=0.0):
    """Posterior mean for ``y = A x + eps`` under the Gaussian prior, as a dense solve.

    Uses circular complex covariances: prior ``F^H diag(2 sigma_k^2) F`` and
    noise ``2 sigma_noise^2 I``. With noise-free data the data block is
    pseudo-inverted.
    """
    n = prior.mode_means.size
    F = fc.fft2c(np.eye(n, dtype=np.complex128).reshape((n,) + prior.shape)).reshape(n, n).T
    cov = F.conj().T @ np.diag(2.0 * prior.mode_vars.ravel()) @ F
    mean = fc.ifft2c(prior.mode_means).ravel()
    A = _dense_encoder(csm, mu)
    yv = y[np.broadcast_to(mu.array(), y.shape)]
    S = A @ cov @ A.conj().T + 2.0 * sigma_noise ** 2 * np.eye(A.shape[0])
    resid = yv - A @ mean
    if sigma_noise > 0:
        gain = np.linalg.solve(S, resid)
    else:
        gain = np.linalg.pinv(S, rcond=1e-12, hermitian=True) @ resid
    return (mean + cov @ A.conj().T @ gain).reshape(prior.shape)


@dataclass
class SweepConfig:
    step_counts: tuple = (50, 100, 200, 300, 400, 500)
    variants: tuple = ("HFS_VP", "VP")
    chains: int = 8
    seed_base: int = 0
    M_corr: int = 1
    lambda1: float = 1.0
    lambda2: float = 1.0
    snr: float = 0.16
    dc_enabled: bool = True

    def __post_init__(self):
        steps = tuple(int(s) for s in self.step_counts)
        if not steps or min(steps) < 1 or any(b <= a for a, b in zip(steps, steps[1:])):
            raise ParameterError(f"step_counts must be strictly increasing and >= 1, got {steps}")
        if self.chains < 1:
            raise ParameterError("chains must be >= 1")
        self.step_counts = steps
        self.variants = tuple(Variant.parse(v).value for v in self.variants)

    def seeds(self):
        """Chain seeds, shared by every sweep point so points differ only in their settings."""
        return [self.seed_base + c for c in range(self.chains)]

    def sampler(self, steps, seed=0):
        return SamplerConfig(self.lambda1, self.lambda2, self.snr, steps, self.M_corr, self.dc_enabled, seed,
                             trace=False)


def _chain_rows(variant, steps, seeds, recon, ref, wall):
    rows = []
    per_ms = 1e3 * wall / len(seeds)
    for s, x in zip(seeds, recon.reshape((-1,) + ref.shape)):
        m = metrics.evaluate(x, ref)
        rows.append({"variant": variant, "steps": steps, "seed": s, "nmse": m.nmse, "psnr": m.psnr,
                     "ssim": m.ssim, "wall_ms": per_ms, "agg": 0, "stat": "", "error": ""})
    return rows


def _agg_rows(variant, steps, rows):
    ok = [r for r in rows if not r["error"]]
    if not ok:
        return []
    out = []
    for stat, fn in (("mean", np.mean), ("std", np.std)):
        row = {"variant": variant, "steps": steps, "seed": "", "agg": 1, "stat": stat, "error": ""}
        for k in ("nmse", "psnr", "ssim", "wall_ms"):
            row[k] = float(fn([r[k] for r in ok]))
        out.append(row)
    return out


def run_point(testbed, variant, steps, cfg, model=None, spec=None, reference=None):
    """Reconstruct ``cfg.chains`` chains at one setting; returns per-chain rows."""
    seeds = cfg.seeds()
    spec = spec or testbed.spec(variant)
    model = model or testbed.model(spec)
    ref = testbed.x_true if reference is None else reference
    try:
        rep = reconstruct(testbed.y, testbed.csm, testbed.mu, None, model, spec, cfg.sampler(steps),
                          rng=chain_streams(seeds))
    except HfsError as exc:
        return [{"variant": variant, "steps": steps, "seed": s, "nmse": np.nan, "psnr": np.nan,
                 "ssim": np.nan, "wall_ms": np.nan, "agg": 0, "stat": "", "error": str(exc)} for s in seeds]
    return _chain_rows(variant, steps, seeds, rep.reconstruction, ref, rep.wall_time)


def convergence_sweep(testbed, cfg):
    """NMSE/PSNR/SSIM per (variant, step count), rows sorted by (variant, steps)."""
    rows = []
    for variant in sorted(cfg.variants):
        for steps in cfg.step_counts:
            point = run_point(testbed, variant, steps, cfg)
            rows += point + _agg_rows(variant, steps, point)
    return rows


def ablation_nl(testbed, nl_values=(2, 8, 16, 24, 32), cfg=None, steps=100, models=None):
    """One HFS_VP run per low-band width; ``models`` maps n_l to a score model.

    Without ``models`` the testbed's analytic score is used. A width whose model
    is missing, or that does not fit the grid, yields a row marked absent.
    """
    cfg = cfg or SweepConfig(step_counts=(steps,), variants=("HFS_VP",), chains=4)
    seen, rows = [], []
    for nl in nl_values:
        if nl in seen:
            warnings.warn(f"duplicate n_l={nl} dropped", stacklevel=2)
            continue
        seen.append(nl)
        label = f"HFS_VP/nl={nl}"
        if models is not None and nl not in models or not 0 <= nl <= testbed.shape[testbed.mu.axis]:
            rows.append({"variant": label, "steps": steps, "seed": "", "nmse": np.nan, "psnr": np.nan,
                         "ssim": np.nan, "wall_ms": np.nan, "agg": 1, "stat": "mean", "error": "absent"})
            continue
        spec = testbed.spec("HFS_VP", n_l=nl)
        model = models[nl] if models is not None else testbed.model(spec)
        point = run_point(testbed, label, steps, cfg, model=model, spec=spec)
        rows += point + _agg_rows(label, steps, point)
    return rows


def timing_report(runs):
    """``runs``: iterable of (label, steps, wall seconds). Ratio is wall time over the fastest run."""
    runs = list(runs)
    fastest = min(r[2] for r in runs) if runs else None
    out = []
    for label, steps, wall in runs:
        ratio = wall / fastest if len(runs) > 1 and fastest > 0 else None
        out.append({"label": label, "steps": steps, "wall_s": wall, "ratio": ratio})
    return out


def measure_timing(testbed, step_counts=(100, 1000), variant="HFS_VP", seed=0, repeats=1):
    """Wall clock of single-chain reconstructions (minimum over ``repeats``)."""
    spec = testbed.spec(variant)
    model = testbed.model(spec)
    runs = []
    for steps in step_counts:
        cfg = SamplerConfig(N=steps, seed=seed, trace=False)
        best = min(reconstruct(testbed.y, testbed.csm, testbed.mu, None, model, spec, cfg).wall_time
                   for _ in range(repeats))
        runs.append((f"{variant}/N={steps}", steps, best))
    return timing_report(runs)


def write_csv(rows, path, columns=CSV_COLUMNS):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})


def summary(rows, variant, steps, key="nmse"):
    for r in rows:
        if r["variant"] == variant and r["steps"] == steps and r["agg"] == 1 and r["stat"] == "mean":
            return r[key]
    raise KeyError((variant, steps))


def sweep_config_dict(cfg):
    d = asdict(cfg)
    d["step_counts"] = list(cfg.step_counts)
    d["variants"] = list(cfg.variants)
    return d
