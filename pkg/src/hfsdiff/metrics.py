"""NMSE, PSNR and SSIM. PSNR and SSIM are taken on magnitude images."""
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionError, MetricError

PSNR_CAP = 300.0
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WIN = 11
SSIM_SIGMA = 1.5


@dataclass(frozen=True)
class MetricsReport:
    nmse: float
    psnr: float
    ssim: float

    def as_dict(self):
        return asdict(self)


def _pair(x, ref):
    x = np.asarray(x)
    ref = np.asarray(ref)
    if x.shape != ref.shape:
        raise DimensionError(f"shapes differ: {x.shape} vs {ref.shape}")
    if not np.any(ref):
        raise MetricError("reference is identically zero")
    return x, ref


def nmse(x, ref):
    x, ref = _pair(x, ref)
    return float(np.sum(np.abs(x - ref) ** 2) / np.sum(np.abs(ref) ** 2))


def psnr(x, ref):
    """``10 log10(max|ref|^2 / mse)`` of the magnitudes, capped at 300 dB."""
    x, ref = _pair(x, ref)
    mse = np.mean((np.abs(x) - np.abs(ref)) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(np.max(np.abs(ref)) ** 2 / mse)))


def gaussian_window(size=SSIM_WIN, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-r ** 2 / (2 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(x, ref):
    """Mean SSIM of ``|x|`` against ``|ref|`` with data range ``max|ref|``.

    Local statistics use an 11x11 Gaussian window (sigma 1.5) with symmetric
    boundary extension, and the map is averaged over every pixel.
    """
    x, ref = _pair(x, ref)
    if x.ndim != 2:
        raise DimensionError("ssim expects a single 2D image")
    a = np.abs(x).astype(np.float64)
    b = np.abs(ref).astype(np.float64)
    w = gaussian_window()
    c1 = (SSIM_K1 * b.max()) ** 2
    c2 = (SSIM_K2 * b.max()) ** 2

    def filt(u):
        return ndimage.correlate(u, w, mode="reflect")

    mu_a, mu_b = filt(a), filt(b)
    saa = filt(a * a) - mu_a ** 2
    sbb = filt(b * b) - mu_b ** 2
    sab = filt(a * b) - mu_a * mu_b
    smap = ((2 * mu_a * mu_b + c1) * (2 * sab + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (saa + sbb + c2))
    return float(np.mean(smap))


def evaluate(x, ref):
    return MetricsReport(nmse(x, ref), psnr(x, ref), ssim(x, ref))
