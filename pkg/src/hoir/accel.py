"""Backend selection for the numeric kernels.

Set ``HOIR_NO_NUMBA=1`` (or ``HOIR_BACKEND=numpy``) before importing ``hoir``
to route every hot kernel through its vectorised numpy twin instead of the
numba-compiled loop.  Both paths produce the same results; the numba path is
simply faster on large query sets.
"""
import os
import warnings
from contextlib import contextmanager

try:
    import numba
    from numba import njit as _njit
    numba_installed = True
except ImportError:  # pragma: no cover
    numba = None
    numba_installed = False


def _env_wants_numpy():
    if os.environ.get("HOIR_NO_NUMBA", "").strip() not in ("", "0"):
        return True
    return os.environ.get("HOIR_BACKEND", "").strip().lower() == "numpy"


USE_NUMBA = numba_installed and not _env_wants_numpy()


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def optional_njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    kwargs.setdefault("cache", True)

    def decorator(f):
        if numba_installed:
            return _njit(**kwargs)(f)
        return f

    if func is not None:
        return decorator(func)
    return decorator


def set_threads(n):
    """Cap worker threads for numba (BLAS caps must be set via env before import)."""
    if numba_installed and n:
        with warnings.catch_warnings():
            # loading the threading layer may complain about an old TBB; the
            # workqueue/omp fallback is fine for our serial kernels
            warnings.simplefilter("ignore", numba.NumbaWarning)
            numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


@contextmanager
def backend(name):
    """Temporarily route kernels through ``"numba"`` or ``"numpy"``."""
    global USE_NUMBA
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not numba_installed:
        raise RuntimeError("numba is not installed")
    old = USE_NUMBA
    USE_NUMBA = name == "numba"
    try:
        yield
    finally:
        USE_NUMBA = old
