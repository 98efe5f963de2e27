"""Backend selection for the Monte Carlo kernels.

Set KMTC_DISABLE_NUMBA=1 to run the vectorized numpy implementations
instead of the compiled ones (also the behaviour when numba is missing).
Read once at import time.
"""

import os

DISABLED = os.environ.get("KMTC_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(f):
    """numba.njit(cache=True) if numba is importable, else the plain
    function (with ``py_func`` set, as on a compiled dispatcher)."""
    if _numba is None:  # pragma: no cover
        f.py_func = f
        return f
    return _numba.njit(cache=True)(f)
