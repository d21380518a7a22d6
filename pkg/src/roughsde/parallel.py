"""Deterministic chunking of Monte Carlo streams over worker threads."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

R = TypeVar("R")

DEFAULT_CHUNK = 2048


def chunk_bounds(n_samples: int, chunk_size: int = DEFAULT_CHUNK) -> list[tuple[int, int]]:
    """``(start, count)`` pairs covering ``range(n_samples)``; independent of the worker count."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    return [(s, min(chunk_size, n_samples - s)) for s in range(0, n_samples, chunk_size)]


def map_chunks(
    fn: Callable[[int, int], R],
    n_samples: int,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> list[R]:
    """Apply ``fn(start, count)`` to every chunk, results ordered by stream index.

    ``workers`` only caps concurrency; chunk boundaries and therefore every
    result are the same for any worker count.
    """
    bounds = chunk_bounds(n_samples, chunk_size)
    if workers <= 1 or len(bounds) == 1:
        return [fn(s, c) for s, c in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
