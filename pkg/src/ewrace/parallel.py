"""Process-pool mapping with results returned in submission order."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable

WORKERS_ENV = "EWRACE_WORKERS"


def resolve_workers(workers: int | None) -> int:
    """Explicit count, else ``$EWRACE_WORKERS``, else 1."""
    if workers is None:
        env = os.environ.get(WORKERS_ENV, "").strip()
        workers = int(env) if env else 1
    if workers < 1:
        raise ValueError(f"worker count must be positive, got {workers}")
    return workers


def map_ordered(fn: Callable, items: Iterable, workers: int | None = 1) -> list:
    """``[fn(x) for x in items]``, optionally spread over worker processes.

    Output order follows input order whatever the scheduling, so reductions
    over the result are deterministic.
    """
    items = list(items)
    n = resolve_workers(workers)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
