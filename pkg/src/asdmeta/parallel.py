"""Deterministic process-pool map.

Workers receive their context through an initializer and tasks carry derived
seeds, so results are identical at any worker count; only wall time changes.
"""

from __future__ import annotations

import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence


def pmap(
    fn: Callable,
    items: Sequence,
    threads: int,
    initializer: Callable | None = None,
    initargs: tuple = (),
) -> list:
    """Map ``fn`` over ``items`` preserving order; serial when threads <= 1."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        if initializer is not None:
            initializer(*initargs)
        return [fn(item) for item in items]
    ctx = multiprocessing.get_context("fork")
    chunksize = max(1, len(items) // (threads * 4))
    with ProcessPoolExecutor(
        max_workers=threads, mp_context=ctx,
        initializer=initializer, initargs=initargs,
    ) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
