"""Backend switch for the compiled kernels.

Set ``HFSDIFF_DISABLE_NUMBA=1`` before import to force the pure-numpy
implementations. Numba is also skipped silently when it cannot be imported.
"""
import os

_disabled = os.environ.get("HFSDIFF_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError
    import numba
    from numba import njit, prange

    # prefer layers that need no extra runtime; old TBB builds only emit warnings
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

    prange = range

USE_NUMBA = HAVE_NUMBA


def backend():
    return "numba" if USE_NUMBA else "numpy"
