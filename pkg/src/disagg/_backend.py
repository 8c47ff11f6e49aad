"""Kernel backend selection.

The hot sampler kernels exist twice: a numba ``@njit`` version and a
vectorized numpy version. ``DISAGG_BACKEND=numpy`` forces the fallback;
otherwise numba is used when it imports.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

HAVE_NUMBA = numba is not None

_requested = os.environ.get("DISAGG_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ImportError(f"DISAGG_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numba" if HAVE_NUMBA and _requested != "numpy" else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def resolve(backend=None):
    """Validate an explicit backend name, defaulting to the process-wide one."""
    if backend is None:
        return BACKEND
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
