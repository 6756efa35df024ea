"""Deterministic fan-out of independent tasks."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """``[fn(item) for item in items]``, optionally on a thread pool.

    Results come back in input order, and every task derives its randomness
    from its own stream address, so the output does not depend on
    ``workers``.  The compiled kernels release the GIL, so threads give real
    parallelism for the expensive work.
    """
    items = list(items)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
