"""Score-model interface, the closed-form Gaussian-prior score and the DSM loss."""
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from . import field as fc
from .diffusion import kernel_coeffs, perturb_with
from .errors import DegenerateTimeError, DimensionError, ParameterError, SingularityError


@runtime_checkable
class ScoreModel(Protocol):
    """Anything that maps ``(x, t)`` to an image-domain score field of the same shape."""

    spec: object

    def evaluate(self, x, t): ...


@dataclass
class GaussianPrior:
    """Independent complex Gaussian per centered Fourier mode.

    ``mode_vars`` is the variance of each real and imaginary component, so
    ``E|x_k - m_k|^2 = 2 sigma_k^2``.
    """

    mode_means: np.ndarray
    mode_vars: np.ndarray

    def __post_init__(self):
        self.mode_means = np.asarray(self.mode_means, dtype=np.complex128)
        self.mode_vars = np.asarray(self.mode_vars, dtype=np.float64)
        if self.mode_means.ndim != 2 or self.mode_means.shape != self.mode_vars.shape:
            raise DimensionError(f"prior means {self.mode_means.shape} and variances "
                                 f"{self.mode_vars.shape} must be matching 2D grids")
        if not np.all(self.mode_vars > 0) or not np.all(np.isfinite(self.mode_vars)):
            raise ParameterError("prior variances must be positive and finite")
        fc.check_finite(self.mode_means, "prior means")

    @property
    def shape(self):
        return self.mode_means.shape

    def sample(self, rng, count=None):
        """Image-domain draws; ``count=None`` returns a single field."""
        shape = self.shape if count is None else (int(count),) + self.shape
        z = rng.complex_normal(shape)
        return fc.ifft2c(self.mode_means + np.sqrt(self.mode_vars) * z)


def gaussian_score_kspace(prior, spec, xk, t):
    """Marginal score of ``perturb`` applied to ``prior``, mode by mode in k-space."""
    if tuple(xk.shape[-2:]) != prior.shape:
        raise DimensionError(f"field grid {xk.shape[-2:]} does not match prior {prior.shape}")
    c = kernel_coeffs(spec, t)
    a, v = c.mean_coeff, c.var
    var_t = a * a * prior.mode_vars + v
    if np.any(var_t <= 0):
        raise SingularityError(f"marginal variance vanishes at t={t}")
    s = -(xk - a * prior.mode_means) / var_t
    if spec.is_hfs:
        low = spec.freq_mask(prior.shape).low()
        s = np.where(low, -(xk - prior.mode_means) / prior.mode_vars, s)
    return s


def gaussian_score(prior, spec, x, t):
    """Exact score of the Gaussian-prior marginal at time ``t`` (image in, image out).

    High modes see ``-(x_k - a m_k) / (a^2 sigma_k^2 + v)``; on the low band of
    HFS variants nothing diffuses, so the prior score ``-(x_k - m_k) / sigma_k^2``
    is returned regardless of ``t``.
    """
    x = fc.as_field(x)
    return fc.ifft2c(gaussian_score_kspace(prior, spec, fc.fft2c(x), t))


class GaussianScoreModel:
    """:func:`gaussian_score` behind the :class:`ScoreModel` interface."""

    def __init__(self, prior, spec):
        self.prior = prior
        self.spec = spec

    def evaluate(self, x, t):
        return gaussian_score(self.prior, self.spec, x, t)

    def evaluate_kspace(self, xk, t):
        return gaussian_score_kspace(self.prior, self.spec, xk, t)


def dsm_residual(model, x0, t, z, spec):
    """``P z + sqrt(v) P s(x_t, t)`` with ``P = F_h`` (identity for full-space variants)."""
    x0 = fc.as_field(x0, "x0")
    z = fc.as_field(z, "z")
    if x0.shape != z.shape:
        raise DimensionError(f"x0 {x0.shape} and z {z.shape} differ in shape")
    c = kernel_coeffs(spec, t)
    if c.var <= 0:
        raise DegenerateTimeError(f"kernel variance is zero at t={t}; sample t >= eps_t")
    xt = perturb_with(x0, t, spec, z)
    s = model.evaluate(xt, t)
    m = spec.freq_mask(x0.shape[-2:])
    return fc.apply_fh(z, m) + np.sqrt(c.var) * fc.apply_fh(s, m)


def dsm_loss(model, x0, t, z, spec):
    """Denoising score-matching loss for one noise draw.

    Equals ``||F_h z + sqrt(v) F_h s(x_t, t)||^2``; zero exactly when the model
    returns ``-F_h z / sqrt(v)``. Leading axes of ``x0`` are averaged.
    """
    r = dsm_residual(model, x0, t, z, spec)
    per = np.sum(r.real ** 2 + r.imag ** 2, axis=(-2, -1))
    return float(np.mean(per))


def gaussian_dsm_minimum(prior, spec, t):
    """Expected DSM loss of the exact Gaussian score.

    The optimal residual on a diffused mode is ``(a^2 s^2 z - sqrt(v) a s w) / (a^2 s^2 + v)``
    with ``w, z`` independent standard complex normals, whose mean square is
    ``2 a^2 s^2 / (a^2 s^2 + v)``.
    """
    c = kernel_coeffs(spec, t)
    a2s = c.mean_coeff ** 2 * prior.mode_vars
    per = 2.0 * a2s / (a2s + c.var)
    return float(np.sum(per[spec.freq_mask(prior.shape).high()]))
