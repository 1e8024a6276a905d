"""Seedable, counter-based random stream.

Every variate is a pure function of ``(seed, stream_id, draw index)``, so two
streams with the same identity replay identical sequences regardless of how the
draws are chunked, and distinct stream ids never overlap.
"""
import numpy as np

from .kernels import _accel
from .kernels import philox as _ph

_MASK32 = 0xFFFFFFFF
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _split64(value):
    value = int(value) & _MASK64
    return value & _MASK32, value >> 32


class RngStream:
    """Philox4x32-10 stream keyed by ``seed`` with the stream id in the counter.

    Normals and uniforms keep separate draw positions. ``complex_normal``
    interleaves two real normals per element (real part first), each of unit
    variance.
    """

    def __init__(self, seed=0, stream_id=0, normal_pos=0, uniform_pos=0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self.normal_pos = int(normal_pos)
        self.uniform_pos = int(uniform_pos)
        self._key = _split64(self.seed)
        self._stream = _split64(self.stream_id)

    def __repr__(self):
        return (f"RngStream(seed={self.seed}, stream_id={self.stream_id}, "
                f"normal_pos={self.normal_pos}, uniform_pos={self.uniform_pos})")

    @property
    def key_words(self):
        return np.uint64(self._key[0]), np.uint64(self._key[1])

    @property
    def stream_words(self):
        return np.uint64(self._stream[0]), np.uint64(self._stream[1])

    def copy(self):
        return RngStream(self.seed, self.stream_id, self.normal_pos, self.uniform_pos)

    def spawn(self, stream_id):
        """Independent stream sharing this seed."""
        return RngStream(self.seed, stream_id)

    def state(self):
        return {"seed": self.seed, "stream_id": self.stream_id,
                "normal_pos": self.normal_pos, "uniform_pos": self.uniform_pos}

    def advance_normals(self, count):
        """Skip ``count`` normal draws; returns the index of the first skipped one."""
        start = self.normal_pos
        self.normal_pos += int(count)
        return start

    def normals_at(self, start, n):
        if _accel.USE_NUMBA:
            out = np.empty(n)
            k0, k1 = self.key_words
            s0, s1 = self.stream_words
            _ph.fill_normals_nb(out, np.int64(start), k0, k1, s0, s1, _ph.ZIG_K_I64, _ph.ZIG_W, _ph.ZIG_F)
            return out
        return _ph.fill_normals_np(n, start, self._key, self._stream)

    def normal(self, shape=()):
        n = int(np.prod(shape, dtype=np.int64))
        out = self.normals_at(self.advance_normals(n), n)
        return out.reshape(shape)

    def complex_normal(self, shape=()):
        n = int(np.prod(shape, dtype=np.int64))
        raw = self.normals_at(self.advance_normals(2 * n), 2 * n)
        return (raw[0::2] + 1j * raw[1::2]).reshape(shape)

    def uniform(self, shape=(), low=0.0, high=1.0):
        n = int(np.prod(shape, dtype=np.int64))
        start = self.uniform_pos
        self.uniform_pos += n
        if _accel.USE_NUMBA:
            out = np.empty(n)
            k0, k1 = self.key_words
            s0, s1 = self.stream_words
            _ph.fill_uniforms_nb(out, np.int64(start), k0, k1, s0, s1)
        else:
            out = _ph.fill_uniforms_np(n, start, self._key, self._stream)
        return (low + (high - low) * out).reshape(shape)

    def integers(self, high, shape=()):
        """Integers in ``[0, high)``."""
        u = self.uniform(shape)
        return np.minimum((u * high).astype(np.int64), high - 1)

    def permutation(self, n):
        return np.argsort(self.uniform(n), kind="stable")
