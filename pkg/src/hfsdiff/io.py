"""BART-style ``.cfl``/``.hdr`` arrays and 16-bit PGM quick-looks.

A ``.hdr`` holds ``# Dimensions`` followed by the extents, first axis fastest.
The ``.cfl`` is interleaved little-endian float32 (re, im) in column-major order.
"""
from pathlib import Path

import numpy as np

from .errors import IOFormatError


def _base(path):
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".cfl", ".hdr") else p


def write_cfl(path, array):
    base = _base(path)
    arr = np.asarray(array)
    dims = arr.shape if arr.ndim else (1,)
    base.with_suffix(".hdr").write_text("# Dimensions\n" + " ".join(str(d) for d in dims) + "\n")
    data = np.asfortranarray(arr.astype(np.complex64)).ravel(order="F")
    base.with_suffix(".cfl").write_bytes(data.astype("<c8").tobytes())
    return base.with_suffix(".cfl")


def read_cfl(path):
    base = _base(path)
    try:
        lines = base.with_suffix(".hdr").read_text().splitlines()
        raw = base.with_suffix(".cfl").read_bytes()
    except OSError as exc:
        raise IOFormatError(f"cannot read {base}.cfl/.hdr: {exc}") from exc
    try:
        idx = [ln.strip() for ln in lines].index("# Dimensions")
        dims = tuple(int(d) for d in lines[idx + 1].split())
    except (ValueError, IndexError) as exc:
        raise IOFormatError(f"malformed header {base}.hdr") from exc
    data = np.frombuffer(raw, dtype="<c8")
    if data.size != int(np.prod(dims)):
        raise IOFormatError(f"{base}.cfl holds {data.size} values, header says {dims}")
    return data.reshape(dims, order="F").astype(np.complex128)


def coils_to_cfl(maps):
    """(n_coils, rows, cols) -> (rows, cols, n_coils) as stored on disk."""
    return np.moveaxis(np.asarray(maps), 0, -1)


def coils_from_cfl(arr):
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[..., None]
    return np.moveaxis(arr, -1, 0)


def write_pgm(path, image):
    """16-bit binary PGM of ``|image|``, min-max scaled. Returns ``(lo, hi)``.

    Pixel ``p`` maps back to ``lo + p * (hi - lo) / 65535``.
    """
    mag = np.abs(np.asarray(image, dtype=np.complex128))
    lo, hi = float(mag.min()), float(mag.max())
    span = hi - lo
    pix = np.zeros(mag.shape, dtype=np.uint16) if span == 0 else np.rint((mag - lo) / span * 65535).astype(np.uint16)
    rows, cols = pix.shape
    header = f"P5\n{cols} {rows}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + pix.astype(">u2").tobytes())
    return lo, hi


def read_pgm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise IOFormatError(f"{path} is not a binary PGM")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    dtype = ">u2" if maxval > 255 else "u1"
    body = parts[4]
    return np.frombuffer(body, dtype=dtype, count=rows * cols).reshape(rows, cols)
