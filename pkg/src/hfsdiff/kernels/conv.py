"""3x3 'same' convolution via im2col, channels-last layout (B, H, W, C).

Column index of tap (di, dj) and input channel c is ``(3 * di + dj) * C + c``.
The scatter in ``col2im`` visits taps in ascending order in both backends, so
gradients are bit-identical between them.
"""
import numpy as np

from ._accel import njit, prange


@njit(cache=True, parallel=True)
def im2col_nb(x):
    nb, h, w, c = x.shape
    out = np.zeros((nb, h, w, 9 * c), dtype=x.dtype)
    for b in prange(nb):
        for i in range(h):
            for j in range(w):
                for di in range(3):
                    ii = i + di - 1
                    if ii < 0 or ii >= h:
                        continue
                    for dj in range(3):
                        jj = j + dj - 1
                        if jj < 0 or jj >= w:
                            continue
                        base = (3 * di + dj) * c
                        for q in range(c):
                            out[b, i, j, base + q] = x[b, ii, jj, q]
    return out


@njit(cache=True, parallel=True)
def col2im_nb(cols, c):
    nb, h, w, _ = cols.shape
    out = np.zeros((nb, h, w, c), dtype=cols.dtype)
    for b in prange(nb):
        for k in range(9):
            di = k // 3
            dj = k % 3
            for i in range(h):
                ii = i + di - 1
                if ii < 0 or ii >= h:
                    continue
                for j in range(w):
                    jj = j + dj - 1
                    if jj < 0 or jj >= w:
                        continue
                    for q in range(c):
                        out[b, ii, jj, q] += cols[b, i, j, k * c + q]
    return out


def im2col_np(x):
    nb, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    taps = [xp[:, di:di + h, dj:dj + w, :] for di in range(3) for dj in range(3)]
    return np.concatenate(taps, axis=-1)


def col2im_np(cols, c):
    nb, h, w, _ = cols.shape
    out = np.zeros((nb, h + 2, w + 2, c), dtype=cols.dtype)
    for k in range(9):
        di, dj = divmod(k, 3)
        out[:, di:di + h, dj:dj + w, :] += cols[..., k * c:(k + 1) * c]
    return np.ascontiguousarray(out[:, 1:-1, 1:-1, :])
