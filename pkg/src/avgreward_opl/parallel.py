"""
Capped worker pool for avgreward-opl.

This module runs independent tasks (optimizer starts, cross-validation
folds, replications) on a thread pool whose size is capped by the
``OPL_THREADS`` environment variable. Results are collected by task index,
so reductions over them do not depend on completion order.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from threading import Lock
from typing import Any, Callable, Dict, Generic, List, Optional, Sequence, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "OPL_THREADS"


def default_max_workers() -> int:
    """Worker cap from ``OPL_THREADS``; CPU count when unset, 1 when invalid."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return max(1, os.cpu_count() or 1)
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Ignoring invalid %s=%r; running single-threaded", THREADS_ENV, raw)
        return 1
    if value < 1:
        logger.warning("Ignoring invalid %s=%r; running single-threaded", THREADS_ENV, raw)
        return 1
    return value


def derive_seed(seed_root: int, index: int) -> int:
    """Seed of task ``index`` under ``seed_root``; independent of any global RNG."""
    return int(np.random.SeedSequence([int(seed_root), int(index)]).generate_state(1)[0])


@dataclass
class TaskOutcome(Generic[R]):
    """Result or error of one task."""

    index: int
    value: Optional[R] = None
    error: Optional[BaseException] = None

    @property
    def ok(self) -> bool:
        return self.error is None


class WorkerPool:
    """Thread pool with deterministic, index-keyed result collection."""

    def __init__(self, max_workers: Optional[int] = None) -> None:
        """
        Initialize the pool.

        Args:
            max_workers: Worker cap; defaults to :func:`default_max_workers`
        """
        self.max_workers = max(1, max_workers if max_workers is not None else default_max_workers())
        self._lock = Lock()
        self.stats = {
            "submitted_tasks": 0,
            "succeeded_tasks": 0,
            "failed_tasks": 0,
            "batches": 0,
        }

    def _run_one(self, fn: Callable[[T], R], index: int, item: T) -> TaskOutcome[R]:
        try:
            value = fn(item)
        except Exception as e:
            with self._lock:
                self.stats["failed_tasks"] += 1
            logger.debug("Task %d failed: %s", index, e)
            return TaskOutcome(index=index, error=e)
        with self._lock:
            self.stats["succeeded_tasks"] += 1
        return TaskOutcome(index=index, value=value)

    def map(self, fn: Callable[[T], R], items: Sequence[T]) -> List[TaskOutcome[R]]:
        """
        Apply ``fn`` to every item and return outcomes ordered by item index.

        Exceptions raised by ``fn`` are captured in the outcome, never
        propagated; one failing task does not stop the others.
        """
        items = list(items)
        with self._lock:
            self.stats["submitted_tasks"] += len(items)
            self.stats["batches"] += 1
        if self.max_workers == 1 or len(items) <= 1:
            return [self._run_one(fn, i, item) for i, item in enumerate(items)]

        workers = min(self.max_workers, len(items))
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(self._run_one, fn, i, item) for i, item in enumerate(items)]
            return [f.result() for f in futures]

    def get_stats(self) -> Dict[str, Any]:
        with self._lock:
            stats = self.stats.copy()
        stats["max_workers"] = self.max_workers
        return stats
