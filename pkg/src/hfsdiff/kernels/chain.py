"""Forward Markov-chain kernel on the high band of centered k-space.

Each step maps every high mode ``x -> c1[s] * x + c2[s] * z`` with ``z`` a
standard complex normal; low modes are left untouched. Step ``s`` of sample
``b`` reads the normals a batched ``complex_normal((B, rows*cols))`` call
would return, so both paths consume the stream identically.
"""
import numpy as np

from ._accel import njit
from .philox import fill_normals_buf_nb


def high_runs(high):
    """Contiguous runs of True in the flattened mask, as (starts, lengths)."""
    flat = np.asarray(high, dtype=bool).ravel()
    padded = np.concatenate(([False], flat, [False])).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    starts = edges[0::2]
    return starts.astype(np.int64), (edges[1::2] - starts).astype(np.int64)


@njit(cache=True)
def hfs_chain_nb(xh, run_start, run_len, c1, c2, start, k0, k1, s0, s1, ki, wi, fi):
    nb = xh.shape[0]
    hw = xh.shape[1]
    steps = c1.shape[0]
    maxrun = 1
    for r in range(run_len.shape[0]):
        maxrun = max(maxrun, run_len[r])
    buf = np.empty(2 * maxrun)
    words = np.empty(4 * maxrun + 4, dtype=np.uint64)
    # samples are independent: keep one sample hot in cache for all steps
    for b in range(nb):
        for s in range(steps):
            base = start + 2 * (s * nb * hw + b * hw)
            a = c1[s]
            g = c2[s]
            for r in range(run_len.shape[0]):
                off = run_start[r]
                ln = run_len[r]
                z = buf[:2 * ln]
                fill_normals_buf_nb(z, base + 2 * off, words, k0, k1, s0, s1, ki, wi, fi)
                for q in range(ln):
                    v = xh[b, off + q]
                    xh[b, off + q] = complex(a * v.real + g * z[2 * q], a * v.imag + g * z[2 * q + 1])


def hfs_chain_np(xh, high_flat, c1, c2, rng):
    """Reference path: draws the whole batch each step from ``rng``."""
    for s in range(c1.shape[0]):
        z = rng.complex_normal(xh.shape)
        xh[:, high_flat] = c1[s] * xh[:, high_flat] + c2[s] * z[:, high_flat]
