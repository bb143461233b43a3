"""Deterministic parallel map over disorder realizations."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

from .model import derive_seed

T = TypeVar("T")

_default_threads = 1


def set_default_threads(n: int) -> None:
    global _default_threads
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    _default_threads = int(n)


def default_threads() -> int:
    return _default_threads


def map_realizations(
    fn: Callable[[int, int], T],
    count: int,
    master_seed: int,
    threads: int | None = None,
) -> list[T]:
    """Evaluate ``fn(index, seed)`` for every realization index.

    Seeds are derived from ``(master_seed, index)`` and results come back in
    index order, so the output does not depend on ``threads``.  The compiled
    kernels release the GIL, which is what makes threads useful here.
    """
    if count < 1:
        raise ValueError(f"need at least one realization, got {count}")
    threads = _default_threads if threads is None else threads
    threads = max(1, min(int(threads), count))
    seeds = [derive_seed(master_seed, i) for i in range(count)]
    if threads == 1:
        return [fn(i, s) for i, s in enumerate(seeds)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count), seeds))


def mean_stderr(values: Sequence[float]) -> tuple[float, float]:
    import numpy as np

    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        return float(arr.mean()), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size))
