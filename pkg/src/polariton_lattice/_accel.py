"""Backend selection for the hot kernels.

Every kernel in :mod:`polariton_lattice.kernels` exists twice: a loop version
compiled with numba and a vectorised numpy version.  The environment variable
``POLARITON_BACKEND`` (``numba`` or ``numpy``) picks the default at import
time; :func:`set_backend` switches at runtime (used by tests and benchmarks).
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None

_requested = os.environ.get("POLARITON_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"POLARITON_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

_backend = _requested if HAVE_NUMBA else "numpy"


def njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if not HAVE_NUMBA:
            return f
        return numba.njit(**kwargs)(f)

    return wrap(func) if func is not None else wrap


def get_backend():
    return _backend


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` kernels; returns the previous backend."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    old, _backend = _backend, name
    return old


def thread_cap():
    """Worker cap from ``POLARITON_THREADS`` (``None`` when unset)."""
    raw = os.environ.get("POLARITON_THREADS")
    if not raw:
        return None
    n = int(raw)
    if n < 1:
        raise ValueError("POLARITON_THREADS must be >= 1")
    return n
