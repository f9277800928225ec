"""Optional numba acceleration.

Hot kernels are written once in the numba-compatible subset of Python/numpy.
With ``SHADOWFLOW_DISABLE_NUMBA=1`` (or when numba is not importable) the
decorator is the identity and the same source runs under the interpreter.
"""

import os

_DISABLED = os.environ.get("SHADOWFLOW_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba

    NUMBA_ENABLED = True
except ImportError:
    numba = None
    NUMBA_ENABLED = False


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when enabled, otherwise a no-op decorator."""
    if NUMBA_ENABLED:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func


def python_impl(func):
    """The interpreted version of a kernel, whichever mode is active."""
    return getattr(func, "py_func", func)


__all__ = ["njit", "python_impl", "NUMBA_ENABLED"]
