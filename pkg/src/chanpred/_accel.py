"""Numba availability switch.

Kernels in :mod:`chanpred._kernels` are written twice: once as ``@njit``
loops and once as vectorised numpy. ``CHANPRED_DISABLE_NUMBA=1`` (or a
missing numba install) selects the numpy path at import time.
"""
from __future__ import annotations

import os

_FLAG = "CHANPRED_DISABLE_NUMBA"


def _env_disabled() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    from numba import njit  # noqa: F401

    NUMBA_INSTALLED = True
except ImportError:  # pragma: no cover - numba ships with the dev env
    NUMBA_INSTALLED = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


USE_NUMBA = NUMBA_INSTALLED and not _env_disabled()


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
