"""Optional numba acceleration; everything runs as plain Python without it."""

try:
    from numba import njit as _njit
    from numba.core.registry import CPUDispatcher

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False
    CPUDispatcher = ()


def njit(fn):
    if HAVE_NUMBA:
        return _njit(cache=True)(fn)
    return fn  # pragma: no cover


def jit_closure(fn):
    """Compile a closure (not cacheable across processes)."""
    if HAVE_NUMBA:
        return _njit(fn)
    return fn  # pragma: no cover


def is_jitted(fn):
    return HAVE_NUMBA and isinstance(fn, CPUDispatcher)
