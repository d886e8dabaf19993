"""Deterministic fan-out over bath configurations.

Results never depend on the worker count: tasks are mapped in order and
reduced by pairwise summation in fixed index order.
"""

from __future__ import annotations

import logging
import multiprocessing as mp
from collections.abc import Callable, Iterable, Sequence

import numpy as np

from shbsim.config import WORKERS

logger = logging.getLogger(__name__)


def derive_seeds(seed: int, n: int) -> list[int]:
    """Independent per-configuration seeds from one scenario seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(child.generate_state(1, dtype=np.uint32)[0]) for child in children]


def parallel_map(func: Callable, tasks: Iterable, workers: int | None = None) -> list:
    tasks = list(tasks)
    workers = WORKERS if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]
    logger.info("mapping %d tasks over %d workers", len(tasks), workers)
    with mp.get_context("spawn").Pool(processes=min(workers, len(tasks))) as pool:
        return pool.map(func, tasks, chunksize=1)


def pairwise_sum(arrays: Sequence[np.ndarray]) -> np.ndarray:
    if not arrays:
        raise ValueError("nothing to sum")
    if len(arrays) == 1:
        return np.array(arrays[0], copy=True)
    mid = len(arrays) // 2
    return pairwise_sum(arrays[:mid]) + pairwise_sum(arrays[mid:])
