"""Row-partitioned execution with a fixed reduction order.

Every per-site kernel in the package computes each output row from an
immutable snapshot, so splitting rows across threads changes who computes a
row but never how. Reductions go through :func:`ordered_sum`, which sums
per-row partials in row order; results are bit-identical for any worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

import numpy as np

WORKERS_ENV = "KACVORTEX_WORKERS"


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        raw = os.environ.get(WORKERS_ENV, "1")
        try:
            workers = int(raw)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    return workers


@lru_cache(maxsize=8)
def _pool(workers: int) -> ThreadPoolExecutor:
    return ThreadPoolExecutor(max_workers=workers, thread_name_prefix="kacvortex")


def row_blocks(n_rows: int, workers: int) -> list[slice]:
    workers = max(1, min(workers, n_rows))
    edges = np.linspace(0, n_rows, workers + 1).astype(int)
    return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def map_rows(func, n_rows: int, workers: int | None = None) -> None:
    """Call ``func(rows)`` for contiguous row blocks, possibly concurrently."""
    workers = resolve_workers(workers)
    blocks = row_blocks(n_rows, workers)
    if len(blocks) == 1:
        func(blocks[0])
        return
    for fut in [_pool(workers).submit(func, b) for b in blocks]:
        fut.result()


def ordered_sum(per_site: np.ndarray) -> float:
    """Reduce each row of a (rows, cols) array, then accumulate rows in order."""
    total = 0.0
    for row_total in per_site.sum(axis=1):
        total += float(row_total)
    return total
