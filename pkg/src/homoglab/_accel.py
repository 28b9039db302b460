"""Backend selection for the compiled kernels.

Set ``HOMOGLAB_DISABLE_NUMBA=1`` to force the pure-numpy code paths. The
flag is read once at import time.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
NUMBA_DISABLED = os.environ.get("HOMOGLAB_DISABLE_NUMBA", "0").strip().lower() not in (
    "",
    "0",
    "false",
    "no",
)
USE_NUMBA = NUMBA_AVAILABLE and not NUMBA_DISABLED


def njit(func):
    """Compile ``func`` with numba when available, otherwise return it unchanged."""
    if not NUMBA_AVAILABLE:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def threads_from_env(default=0):
    """Worker cap from ``HOMOGLAB_THREADS`` (0 means one per CPU)."""
    raw = os.environ.get("HOMOGLAB_THREADS", str(default)).strip()
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"HOMOGLAB_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise ValueError("HOMOGLAB_THREADS must be >= 0")
    if n == 0:
        n = os.cpu_count() or 1
    return n
