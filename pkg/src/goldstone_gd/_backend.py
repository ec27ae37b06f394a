"""Select the compute backend for the hot kernels.

Set ``GOLDSTONE_GD_BACKEND=numpy`` to force the pure-numpy path. The default
is ``numba`` whenever numba imports cleanly.
"""
import os
import warnings

ENV_FLAG = "GOLDSTONE_GD_BACKEND"

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on the environment
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda func: func


def requested_backend():
    choice = os.environ.get(ENV_FLAG, "numba" if HAVE_NUMBA else "numpy").strip().lower()
    if choice not in ("numba", "numpy"):
        raise ValueError(f"{ENV_FLAG} must be 'numba' or 'numpy', got {choice!r}")
    if choice == "numba" and not HAVE_NUMBA:
        warnings.warn("numba is not importable; falling back to the numpy backend")
        choice = "numpy"
    return choice


BACKEND = requested_backend()
