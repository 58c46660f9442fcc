"""Honour ``VIRED_THREADS`` by capping BLAS/OpenMP pools.

The environment variables only take effect if set before numpy loads its BLAS,
so this module is imported first by the package.
"""

from __future__ import annotations

import os

_POOL_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def requested_threads() -> int | None:
    raw = os.environ.get("VIRED_THREADS", "").strip()
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"VIRED_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"VIRED_THREADS must be a positive integer, got {raw!r}")
    return n


def apply_thread_cap() -> int | None:
    try:
        n = requested_threads()
    except ValueError:
        return None  # reported by the CLI, which re-reads the variable
    if n is None:
        return None
    for var in _POOL_VARS:
        os.environ[var] = str(n)
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return n
    threadpool_limits(n)
    return n
