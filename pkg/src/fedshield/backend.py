"""Kernel backend selection.

The modular-arithmetic hot loops (negacyclic NTT, pointwise modmul) exist in
two interchangeable implementations: numba-jitted kernels and pure-numpy
object-dtype fallbacks. The env var FEDSHIELD_BACKEND picks one:

    auto   use numba when importable, else numpy (default)
    numba  require numba, error if unavailable
    numpy  force the pure-numpy path

Both paths produce bit-identical integer results; only speed differs.
"""
from __future__ import annotations

import logging
import os

log = logging.getLogger("fedshield")

_ENV = "FEDSHIELD_BACKEND"
_VALID = ("auto", "numba", "numpy")

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on stripped installs
    HAS_NUMBA = False


def requested_backend() -> str:
    """Raw value of FEDSHIELD_BACKEND, validated."""
    val = os.environ.get(_ENV, "auto").strip().lower()
    if val not in _VALID:
        raise ValueError(
            f"{_ENV} must be one of {_VALID}, got {val!r}"
        )
    return val


def active_backend() -> str:
    """Resolve the backend actually used: 'numba' or 'numpy'."""
    val = requested_backend()
    if val == "numpy":
        return "numpy"
    if val == "numba":
        if not HAS_NUMBA:
            raise RuntimeError(
                f"{_ENV}=numba but numba is not importable"
            )
        return "numba"
    return "numba" if HAS_NUMBA else "numpy"
