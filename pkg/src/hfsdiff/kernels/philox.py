"""Counter-based normal and uniform variates.

Philox4x32-10 (Salmon et al., Random123) turns a 128-bit counter and a 64-bit
key into 128 random bits. Normals are produced with the 128-layer ziggurat of
Marsaglia and Tsang, fed by a per-draw word sequence so that draw ``j`` of a
stream depends only on ``(seed, stream_id, j)``.

Counter layout for one Philox block::

    c0 = block index, low 32 bits
    c1 = block index bits 32..47 | attempt << 16 | domain << 24
    c2, c3 = stream id (low, high)
    key = seed (low, high)

Domains: 0 = first ziggurat word of a normal (two normals share one block),
1 = uniforms (two per block), 2 = retry words of normal ``j`` (block index j,
two words per attempt value).

Both a numba path and a vectorized numpy path are provided and agree bit for
bit; the numpy path calls scalar libm on the rare tail/wedge branch to match.
"""
import math

import numpy as np

from ._accel import njit

M0 = 0xD2511F53
M1 = 0xCD9E8D57
W0 = 0x9E3779B9
W1 = 0xBB67AE85
MASK32 = 0xFFFFFFFF

DOMAIN_NORMAL = 0
DOMAIN_UNIFORM = 1
DOMAIN_RETRY = 2

ZIG_R = 3.442619855899
ZIG_V = 9.91256303526217e-3
_TWO53 = 9007199254740992.0
_INV53 = 1.0 / _TWO53


def _ziggurat_tables():
    m1 = _TWO53
    dn = ZIG_R
    tn = dn
    q = ZIG_V / math.exp(-0.5 * dn * dn)
    ki = np.zeros(128, dtype=np.uint64)
    wi = np.zeros(128)
    fi = np.zeros(128)
    ki[0] = int((dn / q) * m1)
    ki[1] = 0
    wi[0] = q / m1
    wi[127] = dn / m1
    fi[0] = 1.0
    fi[127] = math.exp(-0.5 * dn * dn)
    for i in range(126, 0, -1):
        dn = math.sqrt(-2.0 * math.log(ZIG_V / dn + math.exp(-0.5 * dn * dn)))
        ki[i + 1] = int((dn / tn) * m1)
        tn = dn
        fi[i] = math.exp(-0.5 * dn * dn)
        wi[i] = dn / m1
    return ki, wi, fi


ZIG_K, ZIG_W, ZIG_F = _ziggurat_tables()
# rabs < 2**53, so the signed copy compares identically and converts faster
ZIG_K_I64 = ZIG_K.astype(np.int64)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _philox_nb(c0, c1, c2, c3, k0, k1):
    mask = np.uint64(MASK32)
    m0 = np.uint64(M0)
    m1 = np.uint64(M1)
    for _ in range(10):
        p0 = m0 * c0
        p1 = m1 * c2
        n0 = ((p1 >> np.uint64(32)) ^ c1 ^ k0) & mask
        n1 = p1 & mask
        n2 = ((p0 >> np.uint64(32)) ^ c3 ^ k1) & mask
        n3 = p0 & mask
        c0, c1, c2, c3 = n0, n1, n2, n3
        k0 = (k0 + np.uint64(W0)) & mask
        k1 = (k1 + np.uint64(W1)) & mask
    return c0, c1, c2, c3


@njit(cache=True, inline="always")
def _counter_hi(block, attempt, domain):
    return ((block >> np.uint64(32)) & np.uint64(0xFFFF)) | (attempt << np.uint64(16)) | (domain << np.uint64(24))


@njit(cache=True)
def _retry_word_nb(j, m, k0, k1, s0, s1):
    # word m >= 1 of normal j
    a = np.uint64((m - 1) >> 1) & np.uint64(0xFF)
    blk = np.uint64(j)
    c0 = blk & np.uint64(MASK32)
    c1 = _counter_hi(blk, a, np.uint64(DOMAIN_RETRY))
    w0, w1, w2, w3 = _philox_nb(c0, c1, s0, s1, k0, k1)
    if ((m - 1) & 1) == 0:
        return (w1 << np.uint64(32)) | w0
    return (w3 << np.uint64(32)) | w2


@njit(cache=True, inline="always")
def _word_unit_nb(w):
    # strictly inside (0, 1)
    return (np.float64(w >> np.uint64(11)) + 0.5) * _INV53


@njit(cache=True)
def _zig_slow_nb(j, word, k0, k1, s0, s1, ki, wi, fi):
    """Finish a ziggurat draw whose first word missed the fast rectangle."""
    m = 1
    while True:
        idx = np.int64(word & np.uint64(0x7F))
        neg = (word >> np.uint64(7)) & np.uint64(1)
        rabs = np.int64(word >> np.uint64(11))
        x = rabs * wi[idx]
        if rabs < ki[idx]:
            return -x if neg else x
        if idx == 0:
            while True:
                u1 = _word_unit_nb(_retry_word_nb(j, m, k0, k1, s0, s1))
                u2 = _word_unit_nb(_retry_word_nb(j, m + 1, k0, k1, s0, s1))
                m += 2
                xx = -math.log(u1) / ZIG_R
                yy = -math.log(u2)
                if yy + yy > xx * xx:
                    x = ZIG_R + xx
                    return -x if neg else x
        u = _word_unit_nb(_retry_word_nb(j, m, k0, k1, s0, s1))
        m += 1
        if fi[idx] + u * (fi[idx - 1] - fi[idx]) < math.exp(-0.5 * x * x):
            return -x if neg else x
        word = _retry_word_nb(j, m, k0, k1, s0, s1)
        m += 1


@njit(cache=True)
def _pair_slow_nb(pair, wa, wb, k0, k1, s0, s1, ki, wi, fi):
    return (_zig_slow_nb(np.int64(2 * pair), wa, k0, k1, s0, s1, ki, wi, fi),
            _zig_slow_nb(np.int64(2 * pair + 1), wb, k0, k1, s0, s1, ki, wi, fi))


@njit(cache=True, inline="always")
def normal_pair_nb(pair, k0, k1, s0, s1, ki, wi, fi):
    """Normals with draw indices 2*pair and 2*pair + 1."""
    blk = np.uint64(pair)
    c0 = blk & np.uint64(MASK32)
    c1 = _counter_hi(blk, np.uint64(0), np.uint64(DOMAIN_NORMAL))
    w0, w1, w2, w3 = _philox_nb(c0, c1, s0, s1, k0, k1)
    wa = (w1 << np.uint64(32)) | w0
    wb = (w3 << np.uint64(32)) | w2
    ia = np.int64(wa & np.uint64(0x7F))
    ra = np.int64(wa >> np.uint64(11))
    ib = np.int64(wb & np.uint64(0x7F))
    rb = np.int64(wb >> np.uint64(11))
    if ra < ki[ia] and rb < ki[ib]:
        # branch-free sign: the sign bit is a coin flip
        a = ra * wi[ia] * (1.0 - 2.0 * np.int64((wa >> np.uint64(7)) & np.uint64(1)))
        b = rb * wi[ib] * (1.0 - 2.0 * np.int64((wb >> np.uint64(7)) & np.uint64(1)))
        return a, b
    # _zig_slow_nb re-checks the fast rectangle, so a half that passed is unchanged
    return _pair_slow_nb(pair, wa, wb, k0, k1, s0, s1, ki, wi, fi)


@njit(cache=True)
def normal_at_nb(j, k0, k1, s0, s1, ki, wi, fi):
    a, b = normal_pair_nb(j >> 1, k0, k1, s0, s1, ki, wi, fi)
    return a if (j & 1) == 0 else b


@njit(cache=True)
def _normal_words_nb(words, first_pair, k0, k1, s0, s1):
    # independent iterations: LLVM vectorizes this loop
    for p in range(words.shape[0] // 2):
        blk = np.uint64(first_pair + p)
        w0, w1, w2, w3 = _philox_nb(blk & np.uint64(MASK32), _counter_hi(blk, np.uint64(0), np.uint64(DOMAIN_NORMAL)),
                                    s0, s1, k0, k1)
        words[2 * p] = (w1 << np.uint64(32)) | w0
        words[2 * p + 1] = (w3 << np.uint64(32)) | w2


@njit(cache=True)
def _zig_words_nb(out, words, miss, first_draw, k0, k1, s0, s1, ki, wi, fi):
    n = words.shape[0]
    nmiss = 0
    for q in range(n):
        w = words[q]
        idx = np.int64(w & np.uint64(0x7F))
        r = np.int64(w >> np.uint64(11))
        out[q] = r * wi[idx] * (1.0 - 2.0 * np.int64((w >> np.uint64(7)) & np.uint64(1)))
        if r >= ki[idx]:
            miss[nmiss] = np.uint64(q)
            nmiss += 1
    for m in range(nmiss):
        q = np.int64(miss[m])
        out[q] = _zig_slow_nb(np.int64(first_draw + q), words[q], k0, k1, s0, s1, ki, wi, fi)


_CHUNK = 8192


@njit(cache=True)
def fill_normals_nb(out, start, k0, k1, s0, s1, ki, wi, fi):
    words = np.empty(2 * _CHUNK, dtype=np.uint64)
    fill_normals_buf_nb(out, start, words, k0, k1, s0, s1, ki, wi, fi)


@njit(cache=True)
def fill_normals_buf_nb(out, start, words, k0, k1, s0, s1, ki, wi, fi):
    """``fill_normals_nb`` with a caller-owned scratch buffer of length >= 4.

    The first half holds Philox words, the second half ziggurat miss indices.
    """
    n = out.shape[0]
    if n == 0:
        return
    chunk = words.shape[0] // 4 * 2
    miss = words[chunk:2 * chunk]
    i = 0
    j = start
    if j & 1:
        out[0] = normal_at_nb(j, k0, k1, s0, s1, ki, wi, fi)
        i = 1
        j += 1
    while n - i >= 2:
        m = min(chunk, (n - i) // 2 * 2)
        wv = words[:m]
        _normal_words_nb(wv, j >> 1, k0, k1, s0, s1)
        _zig_words_nb(out[i:i + m], wv, miss, j, k0, k1, s0, s1, ki, wi, fi)
        i += m
        j += m
    if i < n:
        out[i] = normal_at_nb(j, k0, k1, s0, s1, ki, wi, fi)


@njit(cache=True)
def fill_uniforms_nb(out, start, k0, k1, s0, s1):
    for i in range(out.shape[0]):
        j = np.uint64(start + i)
        blk = j >> np.uint64(1)
        c0 = blk & np.uint64(MASK32)
        c1 = _counter_hi(blk, np.uint64(0), np.uint64(DOMAIN_UNIFORM))
        w0, w1, w2, w3 = _philox_nb(c0, c1, s0, s1, k0, k1)
        if (j & np.uint64(1)) == 0:
            w = (w1 << np.uint64(32)) | w0
        else:
            w = (w3 << np.uint64(32)) | w2
        out[i] = np.float64(w >> np.uint64(11)) * _INV53


@njit(cache=True)
def philox_block_nb(c, k):
    a, b, cc, d = _philox_nb(np.uint64(c[0]), np.uint64(c[1]), np.uint64(c[2]), np.uint64(c[3]),
                             np.uint64(k[0]), np.uint64(k[1]))
    return np.array([a, b, cc, d], dtype=np.uint64)


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------


def philox_np(c0, c1, c2, c3, k0, k1):
    """Vectorized Philox4x32-10 on uint64 arrays holding 32-bit words."""
    mask = np.uint64(MASK32)
    sh = np.uint64(32)
    c0 = np.asarray(c0, dtype=np.uint64)
    c1 = np.asarray(c1, dtype=np.uint64)
    c2 = np.asarray(c2, dtype=np.uint64)
    c3 = np.asarray(c3, dtype=np.uint64)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    m0 = np.uint64(M0)
    m1 = np.uint64(M1)
    for _ in range(10):
        p0 = m0 * c0
        p1 = m1 * c2
        c0, c1, c2, c3 = (p1 >> sh) ^ c1 ^ k0, p1 & mask, (p0 >> sh) ^ c3 ^ k1, p0 & mask
        k0 = np.uint64((int(k0) + W0) & MASK32)
        k1 = np.uint64((int(k1) + W1) & MASK32)
    return c0, c1, c2, c3


def _counter_hi_np(block, attempt, domain):
    return ((block >> np.uint64(32)) & np.uint64(0xFFFF)) | (np.uint64(attempt) << np.uint64(16)) \
        | (np.uint64(domain) << np.uint64(24))


def _words_np(block, attempt, domain, half, key, stream):
    block = np.asarray(block, dtype=np.uint64)
    c1 = _counter_hi_np(block, attempt, domain)
    w0, w1, w2, w3 = philox_np(block & np.uint64(MASK32), c1,
                               np.full(block.shape, stream[0], dtype=np.uint64),
                               np.full(block.shape, stream[1], dtype=np.uint64), key[0], key[1])
    sh = np.uint64(32)
    return np.where(np.asarray(half) == 0, (w1 << sh) | w0, (w3 << sh) | w2)


def _retry_words_np(j, m, key, stream):
    # m may be an array; attempt differs per entry so group by attempt value
    j = np.asarray(j, dtype=np.uint64)
    m = np.asarray(m, dtype=np.int64)
    out = np.empty(j.shape, dtype=np.uint64)
    att = ((m - 1) >> 1) & 0xFF
    for a in np.unique(att):
        sel = att == a
        out[sel] = _words_np(j[sel], int(a), DOMAIN_RETRY, (m[sel] - 1) & 1, key, stream)
    return out


def _unit_np(w):
    return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * _INV53


def _libm(fn, values):
    # scalar libm, as the compiled path uses; numpy's SIMD log/exp can differ in the last ulp
    return np.fromiter((fn(v) for v in values.tolist()), dtype=np.float64, count=values.size)


def fill_normals_np(n, start, key, stream):
    j = np.arange(start, start + n, dtype=np.uint64)
    words = _words_np(j >> np.uint64(1), 0, DOMAIN_NORMAL, j & np.uint64(1), key, stream)
    out = np.empty(n)
    pending = np.arange(n)
    m = np.ones(n, dtype=np.int64)
    while pending.size:
        w = words[pending]
        idx = (w & np.uint64(0x7F)).astype(np.int64)
        neg = ((w >> np.uint64(7)) & np.uint64(1)).astype(bool)
        rabs = w >> np.uint64(11)
        x = rabs.astype(np.float64) * ZIG_W[idx]
        fast = rabs < ZIG_K[idx]
        out[pending[fast]] = np.where(neg[fast], -x[fast], x[fast])
        keep = ~fast
        pending, idx, neg, x = pending[keep], idx[keep], neg[keep], x[keep]
        if not pending.size:
            break
        # base strip overflow: sample the tail
        tail = idx == 0
        if tail.any():
            tp = pending[tail]
            tneg = neg[tail]
            active = np.ones(tp.size, dtype=bool)
            while active.any():
                ap = tp[active]
                u1 = _unit_np(_retry_words_np(j[ap], m[ap], key, stream))
                u2 = _unit_np(_retry_words_np(j[ap], m[ap] + 1, key, stream))
                m[ap] += 2
                xx = -_libm(math.log, u1) / ZIG_R
                yy = -_libm(math.log, u2)
                acc = yy + yy > xx * xx
                val = ZIG_R + xx
                ai = np.flatnonzero(active)
                done = ai[acc]
                out[tp[done]] = np.where(tneg[done], -val[acc], val[acc])
                active[done] = False
        wedge = ~tail
        wp, widx, wneg, wx = pending[wedge], idx[wedge], neg[wedge], x[wedge]
        if not wp.size:
            break
        u = _unit_np(_retry_words_np(j[wp], m[wp], key, stream))
        m[wp] += 1
        acc = ZIG_F[widx] + u * (ZIG_F[widx - 1] - ZIG_F[widx]) < _libm(math.exp, -0.5 * wx * wx)
        out[wp[acc]] = np.where(wneg[acc], -wx[acc], wx[acc])
        retry = wp[~acc]
        if retry.size:
            words[retry] = _retry_words_np(j[retry], m[retry], key, stream)
            m[retry] += 1
        pending = retry
    return out


def fill_uniforms_np(n, start, key, stream):
    j = np.arange(start, start + n, dtype=np.uint64)
    w = _words_np(j >> np.uint64(1), 0, DOMAIN_UNIFORM, j & np.uint64(1), key, stream)
    return (w >> np.uint64(11)).astype(np.float64) * _INV53
