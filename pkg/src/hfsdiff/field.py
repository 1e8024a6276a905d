"""Complex 2D fields, centered unitary Fourier transforms and the line masks
that split k-space into a fully known low band and a diffused high band.

Fields are plain ``complex128`` arrays whose last two axes are (rows, cols);
any leading axes are treated as a batch. Whether an array holds an image or
k-space is carried by the function that produced it, not by a wrapper type.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError, ValidationError

SOS_TOLERANCE = 1e-6


def as_field(x, name="x"):
    x = np.asarray(x)
    if x.ndim < 2:
        raise DimensionError(f"{name} must have at least 2 dimensions, got shape {x.shape}")
    if x.shape[-1] < 1 or x.shape[-2] < 1:
        raise DimensionError(f"{name} has an empty grid: shape {x.shape}")
    return x.astype(np.complex128, copy=False)


def check_finite(x, name="x"):
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} contains non-finite values")
    return x


def fft2c(x):
    """Unitary 2D DFT with the DC sample at index (rows // 2, cols // 2)."""
    x = as_field(x)
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(x, axes=(-2, -1)), norm="ortho"), axes=(-2, -1))


def ifft2c(k):
    k = as_field(k, "k")
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(k, axes=(-2, -1)), norm="ortho"), axes=(-2, -1))


def centered_block(extent, count):
    """Indices of ``count`` contiguous lines centered on ``extent // 2``."""
    if not 0 <= count <= extent:
        raise ParameterError(f"block of {count} lines does not fit in {extent}")
    start = extent // 2 - count // 2
    return np.arange(start, start + count)


def _line_array(shape, lines, axis):
    mask = np.zeros(shape, dtype=bool)
    idx = np.asarray(sorted(lines), dtype=np.int64)
    if axis == 0:
        mask[idx, :] = True
    else:
        mask[:, idx] = True
    return mask


@dataclass(frozen=True)
class FrequencyMask:
    """Centered band of ``n_l`` k-space lines treated as the low subspace.

    ``axis`` is the grid axis that indexes the lines (0: whole rows).
    """

    n_l: int
    shape: tuple
    axis: int = 0

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if len(self.shape) != 2 or min(self.shape) < 1:
            raise DimensionError(f"mask shape must be a nonempty 2D grid, got {self.shape}")
        if self.axis not in (0, 1):
            raise ParameterError(f"axis must be 0 or 1, got {self.axis}")
        if not 0 <= self.n_l <= self.extent:
            raise ParameterError(f"n_l={self.n_l} outside [0, {self.extent}]")

    @property
    def extent(self):
        return self.shape[self.axis]

    @property
    def low_lines(self):
        return centered_block(self.extent, self.n_l)

    def low(self):
        return _line_array(self.shape, self.low_lines, self.axis)

    def high(self):
        return ~self.low()

    def with_shape(self, shape):
        return FrequencyMask(self.n_l, shape, self.axis)


@dataclass(frozen=True)
class SamplingMask:
    """Acquired k-space lines: a regular or random pattern plus a centered ACS block."""

    sampled_lines: tuple
    shape: tuple
    factor: float = 1.0
    acs_lines: int = 0
    axis: int = 0
    kind: str = "uniform"

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "sampled_lines", tuple(sorted({int(i) for i in self.sampled_lines})))
        if len(self.shape) != 2 or min(self.shape) < 1:
            raise DimensionError(f"mask shape must be a nonempty 2D grid, got {self.shape}")
        if not self.sampled_lines:
            raise ParameterError("a sampling mask needs at least one line")
        n = self.shape[self.axis]
        if self.sampled_lines[0] < 0 or self.sampled_lines[-1] >= n:
            raise ParameterError("sampled line index outside the grid")
        acs = set(centered_block(n, self.acs_lines).tolist())
        if not acs <= set(self.sampled_lines):
            raise ParameterError("ACS block must be fully sampled")

    @property
    def n_total(self):
        return self.shape[self.axis]

    def acceleration(self):
        return self.n_total / len(self.sampled_lines)

    def array(self):
        return _line_array(self.shape, self.sampled_lines, self.axis)


@dataclass
class CoilSet:
    """Image-domain coil sensitivities, shape (n_coils, rows, cols).

    Maps must be sum-of-squares normalized so that the multi-coil band split
    still sums to the identity.
    """

    maps: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.complex128)
        if maps.ndim == 2:
            maps = maps[None]
        if maps.ndim != 3 or maps.shape[0] < 1:
            raise DimensionError(f"coil maps must be (n_coils, rows, cols), got {maps.shape}")
        self.maps = maps
        if self.validate:
            dev = np.max(np.abs(self.sos() - 1.0))
            if dev > SOS_TOLERANCE:
                raise ValidationError(f"coil maps are not SOS-normalized (max deviation {dev:.3g})")

    @classmethod
    def single(cls, shape):
        return cls(np.ones((1,) + tuple(shape), dtype=np.complex128))

    @property
    def n(self):
        return self.maps.shape[0]

    @property
    def shape(self):
        return self.maps.shape[1:]

    def sos(self):
        return np.sum(np.abs(self.maps) ** 2, axis=0)


def _check_shape(x, shape, what):
    if tuple(x.shape[-2:]) != tuple(shape):
        raise DimensionError(f"{what}: grid {tuple(x.shape[-2:])} does not match {tuple(shape)}")


def apply_fh(x, m):
    """Project onto the high-frequency subspace (image in, image out)."""
    x = as_field(x)
    _check_shape(x, m.shape, "apply_fh")
    if m.n_l == 0:
        return x.copy()
    if m.n_l == m.extent:
        return np.zeros_like(x)
    return ifft2c(fft2c(x) * m.high())


def apply_fl(x, m):
    x = as_field(x)
    _check_shape(x, m.shape, "apply_fl")
    if m.n_l == 0:
        return np.zeros_like(x)
    if m.n_l == m.extent:
        return x.copy()
    return ifft2c(fft2c(x) * m.low())


def _multicoil_band(x, csm, band):
    x = as_field(x)
    _check_shape(x, csm.shape, "coil maps")
    _check_shape(x, band.shape, "band mask")
    coil_k = fft2c(csm.maps * x[..., None, :, :])
    return np.sum(np.conj(csm.maps) * ifft2c(coil_k * band), axis=-3)


def multicoil_fh(x, csm, m):
    """Sum over coils of csm_j^* F^-1 (1 - M_l) F (csm_j x)."""
    _check_sos(csm)
    return _multicoil_band(x, csm, m.high())


def multicoil_fl(x, csm, m):
    _check_sos(csm)
    return _multicoil_band(x, csm, m.low())


def _check_sos(csm):
    dev = np.max(np.abs(csm.sos() - 1.0))
    if dev > SOS_TOLERANCE:
        raise ValidationError(f"coil maps are not SOS-normalized (max deviation {dev:.3g})")


def encode(x, csm, mu):
    """Per-coil undersampled k-space ``M_u F (csm_j x)``, shape (..., n_coils, rows, cols)."""
    x = as_field(x)
    _check_shape(x, csm.shape, "encode")
    _check_shape(x, mu.shape, "encode mask")
    return fft2c(csm.maps * x[..., None, :, :]) * mu.array()


def adjoint(y, csm, mu):
    """Coil-combined ``sum_j csm_j^* F^-1 (M_u y_j)``."""
    y = as_field(y, "y")
    _check_shape(y, csm.shape, "adjoint")
    _check_shape(y, mu.shape, "adjoint mask")
    if y.ndim < 3 or y.shape[-3] != csm.n:
        raise DimensionError(f"expected {csm.n} coils along axis -3, got shape {y.shape}")
    return np.sum(np.conj(csm.maps) * ifft2c(y * mu.array()), axis=-3)


def exp_fh(k, x, m):
    """Apply exp(k F_h) through its closed form ``I + (e^k - 1) F_h``.

    F_h is idempotent, so the exponential series collapses: the low band is
    untouched and the high band is scaled by e^k.
    """
    if not np.isfinite(k):
        raise ParameterError(f"exponent must be finite, got {k}")
    x = as_field(x)
    return x + np.expm1(k) * apply_fh(x, m)
