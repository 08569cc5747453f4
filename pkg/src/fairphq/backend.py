"""Kernel backend selection.

The hot batch kernels exist in two builds with identical interfaces:
kernels_numba (loop bodies under @njit) and kernels_numpy (vectorised
reference). The environment variable FAIRPHQ_BACKEND forces one:

  FAIRPHQ_BACKEND=numba   require the jitted build, error if unavailable
  FAIRPHQ_BACKEND=numpy   force the pure-numpy build
  unset                   prefer numba, fall back to numpy silently

The choice is resolved once per process, on first use. Results agree
between backends to tight float tolerance but not necessarily to the bit,
so reproducibility guarantees hold per backend.
"""

from __future__ import annotations

import os
from types import ModuleType

from .errors import ConfigError

ENV_VAR = "FAIRPHQ_BACKEND"

_active: ModuleType | None = None


def _resolve() -> ModuleType:
    from . import kernels_numpy

    choice = os.environ.get(ENV_VAR, "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ConfigError(f"{ENV_VAR} must be 'numba' or 'numpy', got {choice!r}")
    if choice == "numpy":
        return kernels_numpy
    try:
        from . import kernels_numba
    except ImportError:
        if choice == "numba":
            raise ConfigError(f"{ENV_VAR}=numba but the numba build is not importable")
        return kernels_numpy
    return kernels_numba


def get_kernels() -> ModuleType:
    """The active kernel module, resolved on first call."""
    global _active
    if _active is None:
        _active = _resolve()
    return _active


def active_backend() -> str:
    """Name of the active backend, 'numba' or 'numpy'."""
    return get_kernels().NAME
