"""Optional numba acceleration.

Kernels are written once as plain loops and compiled with ``numba.njit`` when
numba is importable and ``HODINET_DISABLE_NUMBA`` is unset. Every kernel module
also carries a vectorised numpy path; :data:`USE_NUMBA` picks between them.
"""
import os

try:
    import numba as nb
    has_numba = True
except ImportError:  # pragma: no cover
    nb = None
    has_numba = False


def _env_disabled():
    return os.environ.get("HODINET_DISABLE_NUMBA", "").strip() not in ("", "0")


USE_NUMBA = has_numba and not _env_disabled()


def try_jit(func=None, **kwargs):
    """``numba.njit`` if available, identity otherwise. Usable with or without args."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if not has_numba:
            return f
        return nb.njit(**kwargs)(f)

    if func is None:
        return wrap
    return wrap(func)


def set_backend(name):
    """Switch kernels at runtime: ``"numba"`` or ``"numpy"``. Returns the previous one."""
    global USE_NUMBA
    prev = "numba" if USE_NUMBA else "numpy"
    if name == "numba":
        if not has_numba:
            raise RuntimeError("numba is not installed")
        USE_NUMBA = True
    elif name == "numpy":
        USE_NUMBA = False
    else:
        raise ValueError(f"unknown backend {name!r}")
    return prev


def backend():
    return "numba" if USE_NUMBA else "numpy"
