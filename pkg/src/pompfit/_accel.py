"""Numba availability and backend selection.

Set ``POMPFIT_DISABLE_NUMBA=1`` to force the pure-numpy code path. The numba
kernels are specialised per model; the numpy path runs the generic vectorised
reaction engine in :mod:`pompfit.simulators`.
"""

import logging
import os

logger = logging.getLogger(__name__)

_DISABLED = os.environ.get("POMPFIT_DISABLE_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
    "on",
)

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise a no-op decorator."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    def wrap(func):
        return func

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap


def default_backend():
    return "numba" if USE_NUMBA else "numpy"


def resolve_backend(backend):
    if backend is None:
        return default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        logger.warning("numba requested but not importable; using numpy")
        return "numpy"
    return backend
