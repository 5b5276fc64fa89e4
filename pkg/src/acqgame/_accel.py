"""Backend selection for the hot kernels.

Each kernel in :mod:`acqgame.kernels` has a numba ``@njit`` loop version and a
vectorised pure-numpy version.  The numba path is used when numba imports and
``ACQGAME_DISABLE_NUMBA`` is not set to a truthy value.
"""

import os

DISABLE_ENV = "ACQGAME_DISABLE_NUMBA"


def _env_disabled() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    if _env_disabled():
        raise ImportError(f"{DISABLE_ENV} set")
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def njit(func):
    """Compile ``func`` with numba when available; otherwise return it unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func


def backend() -> str:
    """Active backend; the flag is re-read so it can be flipped after import."""
    return "numba" if HAVE_NUMBA and not _env_disabled() else "numpy"


__all__ = ["DISABLE_ENV", "HAVE_NUMBA", "backend", "njit"]
