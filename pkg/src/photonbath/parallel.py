"""Worker-pool helpers whose reductions do not depend on the worker count.

Work is always split into the same fixed chunks; workers only change who
evaluates a chunk, and results are combined in chunk order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

_threads = 1


def set_threads(n: int) -> None:
    global _threads
    if int(n) < 1:
        raise ValueError("thread count must be positive")
    _threads = int(n)


def get_threads() -> int:
    return _threads


@contextmanager
def threads(n: int):
    old = _threads
    set_threads(n)
    try:
        yield
    finally:
        set_threads(old)


def ordered_map(fn, items):
    """``list(map(fn, items))`` evaluated on the configured pool."""
    items = list(items)
    if _threads == 1 or len(items) < 2:
        return [fn(it) for it in items]
    workers = min(_threads, len(items), os.cpu_count() or _threads)
    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        return list(pool.map(fn, items))


def ordered_sum(parts):
    """Left-to-right sum, fixed order."""
    total = None
    for p in parts:
        total = p if total is None else total + p
    return total
