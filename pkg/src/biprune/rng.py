"""Seed handling: one independent stream per replicate, derived from (seed, index)."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def as_seed(rng: np.random.Generator | int | None) -> int:
    """A master seed: integers pass through, generators donate one draw."""
    if rng is None:
        raise ValueError("a seed is required")
    if isinstance(rng, (int, np.integer)):
        if rng < 0:
            raise ValueError("seeds must be nonnegative")
        return int(rng)
    return int(rng.integers(0, 2**63 - 1))


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Stream number ``index`` of master ``seed``; independent of evaluation order."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(int(index),)))


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """Ordered map, optionally over a thread pool; results do not depend on ``threads``."""
    items = list(items)
    if not threads or threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
