"""Numba dispatch switch.

Set ``AMMRG_NO_NUMBA=1`` to force the pure-numpy kernels. The flag is read
once at import time.
"""
import os

_DISABLED = os.environ.get("AMMRG_NO_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

try:
    from numba import njit as _numba_njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise a no-op decorator.

    Compilation happens regardless of ``AMMRG_NO_NUMBA`` so both paths stay
    callable for comparison; the flag only controls which one callers get.
    """
    if HAVE_NUMBA:
        return _numba_njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f
