"""Thread-pool helper with a schedule-independent work split.

Work is cut into fixed-size chunks that do not depend on the thread count,
so every chunk is computed by the same sequence of operations whatever the
pool size. Results come back in chunk order.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")


def chunks(n: int, size: int) -> list[slice]:
    size = max(1, int(size))
    return [slice(a, min(a + size, n)) for a in range(0, n, size)]


def ordered_map(fn: Callable[..., T], items: Sequence, threads: int = 1) -> list[T]:
    """``[fn(x) for x in items]`` evaluated on up to ``threads`` workers."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
