"""numba switch.

Kernels are written once as plain Python loops and compiled with ``njit`` when
numba is importable and ``SPSQSS_DISABLE_NUMBA`` is unset (or ``0``). With the
flag set, callers fall back to the vectorised numpy implementations.
"""

import os

_flag = os.environ.get("SPSQSS_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _flag not in ("", "0", "false", "no")

try:
    if DISABLED_BY_ENV:
        raise ImportError("disabled by SPSQSS_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
