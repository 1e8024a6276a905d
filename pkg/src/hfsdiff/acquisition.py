"""Phantoms, coil maps, undersampling masks and k-space synthesis ``y = A x + eps``."""
from dataclasses import dataclass

import numpy as np

from . import field as fc
from .errors import DimensionError, ParameterError

PHANTOM_KINDS = ("shepp_logan", "gaussian_blobs", "lowfreq_only", "flat_regions")
MASK_KINDS = ("uniform", "gaussian_density")

# modified Shepp-Logan: intensity, semi-axes (a, b), center (x0, y0), angle in degrees
_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


@dataclass
class Phantom:
    image: np.ndarray
    kind: str
    std: float


def _grid(rows, cols):
    y = (np.arange(rows) - rows // 2) / (rows / 2)
    x = (np.arange(cols) - cols // 2) / (cols / 2)
    return np.meshgrid(x, -y)


def _ellipses(rows, cols, table):
    xx, yy = _grid(rows, cols)
    img = np.zeros((rows, cols))
    for amp, a, b, x0, y0, ang in table:
        th = np.deg2rad(ang)
        xr = (xx - x0) * np.cos(th) + (yy - y0) * np.sin(th)
        yr = -(xx - x0) * np.sin(th) + (yy - y0) * np.cos(th)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += amp
    return img


def _shepp_logan(rows, cols, rng, jitter):
    table = np.array(_SHEPP_LOGAN)
    if jitter > 0:
        u = rng.uniform((len(table), 4), -1.0, 1.0)
        table[:, 1:3] *= 1.0 + 0.15 * jitter * u[:, :2]
        table[:, 3:5] += 0.05 * jitter * u[:, 2:4]
        table[2:, 0] *= 1.0 + 0.5 * jitter * rng.uniform(len(table) - 2, -1.0, 1.0)
    return _ellipses(rows, cols, table).astype(np.complex128)


def _gaussian_blobs(rows, cols, rng, count=6):
    xx, yy = _grid(rows, cols)
    img = np.zeros((rows, cols), dtype=np.complex128)
    p = rng.uniform((count, 5))
    for cx, cy, width, amp, phase in p:
        cx, cy = 1.2 * cx - 0.6, 1.2 * cy - 0.6
        w = 0.08 + 0.25 * width
        lobe = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * w * w))
        img += (0.3 + amp) * np.exp(2j * np.pi * phase) * lobe
    return img


def _lowfreq_only(rows, cols, rng, n_l, axis):
    m = fc.FrequencyMask(n_l, (rows, cols), axis)
    if n_l == 0:
        raise ParameterError("lowfreq_only needs n_l >= 1")
    k = rng.complex_normal((rows, cols)) * m.low()
    return fc.ifft2c(k)


def _flat_regions(rows, cols, rng):
    # black background, a large grey body and a brighter insert
    xx, yy = _grid(rows, cols)
    shift = rng.uniform(2, -0.05, 0.05)
    img = np.zeros((rows, cols))
    body = ((xx - shift[0]) / 0.8) ** 2 + ((yy - shift[1]) / 0.85) ** 2 <= 1.0
    img[body] = 0.5
    insert = (np.abs(xx - shift[0] - 0.2) < 0.25) & (np.abs(yy - shift[1]) < 0.35)
    img[insert] = 1.0
    return img.astype(np.complex128)


def make_phantom(kind, rows, cols, rng, n_l=4, axis=0, jitter=0.0):
    """Test object normalized to unit standard deviation of its complex samples.

    ``n_l``/``axis`` only matter for ``lowfreq_only``, whose spectrum is confined
    to that band. ``jitter`` in [0, 1] randomizes the Shepp-Logan ellipses.
    """
    if kind not in PHANTOM_KINDS:
        raise ParameterError(f"unknown phantom kind {kind!r}; choose from {PHANTOM_KINDS}")
    if rows < 8 or cols < 8:
        raise DimensionError(f"phantoms need at least 8x8 pixels, got {rows}x{cols}")
    if kind == "shepp_logan":
        img = _shepp_logan(rows, cols, rng, jitter)
    elif kind == "gaussian_blobs":
        img = _gaussian_blobs(rows, cols, rng)
    elif kind == "lowfreq_only":
        img = _lowfreq_only(rows, cols, rng, n_l, axis)
    else:
        img = _flat_regions(rows, cols, rng)
    std = float(np.std(img))
    if std == 0:
        raise ParameterError(f"{kind} phantom is constant at {rows}x{cols}")
    return Phantom(img / std, kind, std)


def make_csm(n_coils, rows, cols):
    """Smooth complex Gaussian-lobe coil profiles placed on a ring, SOS-normalized."""
    if n_coils < 1:
        raise ParameterError(f"need at least one coil, got {n_coils}")
    if n_coils == 1:
        return fc.CoilSet.single((rows, cols))
    xx, yy = _grid(rows, cols)
    maps = []
    for j in range(n_coils):
        ang = 2 * np.pi * j / n_coils
        cx, cy = 1.1 * np.cos(ang), 1.1 * np.sin(ang)
        lobe = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * 0.8 ** 2))
        phase = np.pi * (0.3 * xx * np.cos(ang + 1.0) + 0.3 * yy * np.sin(ang + 1.0) + j / n_coils)
        maps.append(lobe * np.exp(1j * phase))
    maps = np.array(maps)
    maps /= np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return fc.CoilSet(maps)


def make_undersampling_mask(kind, factor, acs_lines, n_total_lines, rng=None, n_cols=None, axis=0):
    """Line mask with a centered ACS block.

    ``uniform`` keeps lines with ``i mod factor == factor // 2``. ``gaussian_density``
    draws ``round(n / factor)`` lines in total (ACS included) without replacement,
    weighting line ``i`` by ``exp(-d^2 / (2 (n/4)^2))`` with ``d`` its distance to
    the center line.
    """
    n = int(n_total_lines)
    if n < 1:
        raise ParameterError(f"need at least one line, got {n}")
    if not 1 <= factor <= n:
        raise ParameterError(f"factor must lie in [1, {n}], got {factor}")
    if not 0 <= acs_lines <= n:
        raise ParameterError(f"acs_lines={acs_lines} outside [0, {n}]")
    acs = set(fc.centered_block(n, int(acs_lines)).tolist())
    if kind == "uniform":
        if factor != int(factor):
            raise ParameterError(f"uniform masks need an integer factor, got {factor}")
        f = int(factor)
        lines = {i for i in range(n) if i % f == f // 2} | acs
    elif kind == "gaussian_density":
        if rng is None:
            raise ParameterError("gaussian_density masks need an rng")
        budget = max(int(round(n / factor)), len(acs))
        pool = np.array([i for i in range(n) if i not in acs], dtype=np.int64)
        d = pool - n // 2
        w = np.exp(-d.astype(float) ** 2 / (2 * (n / 4) ** 2))
        u = rng.uniform(len(pool))
        # weighted sampling without replacement: keep the largest log(u) / w
        keys = np.log(np.maximum(u, np.finfo(float).tiny)) / w
        take = np.argsort(-keys, kind="stable")[:budget - len(acs)]
        lines = acs | set(pool[take].tolist())
    else:
        raise ParameterError(f"unknown mask kind {kind!r}; choose from {MASK_KINDS}")
    cols = n if n_cols is None else int(n_cols)
    shape = (n, cols) if axis == 0 else (cols, n)
    return fc.SamplingMask(tuple(lines), shape, float(factor), int(acs_lines), axis, kind)


def acquire(x, csm, mu, sigma_noise, rng=None):
    """Per-coil k-space ``M_u F (csm_j x) + eps_j``; noise only on sampled entries."""
    img = x.image if isinstance(x, Phantom) else x
    if sigma_noise < 0:
        raise ParameterError(f"noise level must be >= 0, got {sigma_noise}")
    y = fc.encode(img, csm, mu)
    if sigma_noise > 0:
        if rng is None:
            raise ParameterError("noisy acquisition needs an rng")
        y = y + sigma_noise * rng.complex_normal(y.shape) * mu.array()
    return y
