"""Deterministic replication pools.

Every replication derives its own RNG stream from (master_seed, indices), so
splitting work across processes changes wall time but never results: outputs
are collected in replication order regardless of the worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from functools import partial


def map_over_reps(worker, shared, n_reps: int, threads: int = 1) -> list:
    """Evaluate worker(shared, rep) for rep = 0..n_reps-1, in order.

    `threads` <= 1 runs serially; otherwise a process pool is used (the
    worker must be a module-level function and `shared` picklable).
    """
    fn = partial(worker, shared)
    if threads <= 1 or n_reps <= 1:
        return [fn(rep) for rep in range(n_reps)]
    chunk = max(1, n_reps // (threads * 8))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_reps), chunksize=chunk))
