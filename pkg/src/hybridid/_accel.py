"""Backend switch for the numeric kernels.

Set ``HYBRIDID_DISABLE_NUMBA=1`` to route every public call through the
vectorised numpy implementations instead of the compiled kernels. The
kernel modules stay importable either way; without numba their functions
run as plain Python (slow, but handy for debugging).
"""

import os

_FLAG = "HYBRIDID_DISABLE_NUMBA"

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes")


def njit(*args, **kwargs):
    """``numba.njit`` with cached compilation, or a no-op decorator."""
    if not HAS_NUMBA:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
