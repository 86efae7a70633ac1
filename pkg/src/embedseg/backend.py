"""Kernel backend selection.

The hot numeric kernels (convolution, mean-shift updates, nearest-center
assignment) ship in two implementations: numba-jitted loops and a pure-numpy
fallback. The ``EMBEDSEG_BACKEND`` environment variable picks the default at
import time (``numba`` or ``numpy``); :func:`set_backend` switches at runtime,
which the benchmark uses to compare both paths in one process.

Worker counts map onto numba's thread pool. Requests beyond the pool size
numba launched with are clamped, not errors.
"""

from __future__ import annotations

import os
import warnings

_VALID = ("numba", "numpy")

_numba_ok: bool | None = None


def numba_available() -> bool:
    """True if numba imports cleanly. Cached after the first probe."""
    global _numba_ok
    if _numba_ok is None:
        try:
            import numba  # noqa: F401
            from numba.core.errors import NumbaWarning

            # Old TBB versions make numba fall back to another threading
            # layer; the fallback works, the warning is noise.
            warnings.filterwarnings("ignore", category=NumbaWarning, message=".*TBB.*")
            _numba_ok = True
        except ImportError:
            _numba_ok = False
    return _numba_ok


def _initial_backend() -> str:
    requested = os.environ.get("EMBEDSEG_BACKEND", "numba").strip().lower()
    if requested not in _VALID:
        raise ValueError(
            f"EMBEDSEG_BACKEND must be one of {_VALID}, got {requested!r}"
        )
    if requested == "numba" and not numba_available():
        warnings.warn("numba is not importable; falling back to the numpy backend")
        return "numpy"
    return requested


_backend = _initial_backend()


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> str:
    """Select the kernel implementation. Returns the backend actually active."""
    global _backend
    name = name.strip().lower()
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not numba_available():
        raise RuntimeError("numba backend requested but numba is not importable")
    _backend = name
    return _backend


def max_workers() -> int:
    """Upper bound on kernel worker threads."""
    if numba_available():
        import numba

        return int(numba.config.NUMBA_NUM_THREADS)
    return 1


def set_workers(n: int) -> int:
    """Set the kernel thread count, clamped to the launched pool size.

    Returns the effective count. A no-op (returning 1) on the numpy backend,
    whose kernels do not use the numba pool.
    """
    n = max(1, int(n))
    if not numba_available():
        return 1
    import numba

    effective = min(n, max_workers())
    numba.set_num_threads(effective)
    return effective
