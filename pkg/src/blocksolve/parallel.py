"""Thread pool for per-iteration block updates."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["block_map", "default_workers", "WORKERS_ENV"]

WORKERS_ENV = "BLOCKSOLVE_WORKERS"

_pools: dict[int, ThreadPoolExecutor] = {}


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _pool(workers: int) -> ThreadPoolExecutor:
    pool = _pools.get(workers)
    if pool is None:
        pool = _pools[workers] = ThreadPoolExecutor(max_workers=workers,
                                                    thread_name_prefix="blocksolve")
    return pool


def block_map(fn, blocks, workers=1) -> list:
    """``[fn(i) for i in blocks]``, possibly on ``workers`` threads.

    Results come back in input order, so callers reduce deterministically.
    """
    if workers <= 1 or len(blocks) <= 1:
        return [fn(i) for i in blocks]
    return list(_pool(workers).map(fn, blocks))
