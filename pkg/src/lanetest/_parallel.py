"""Order-preserving parallel evaluation of scenarios.

Results must be byte-identical whatever the worker count, so work items
carry their own seeds, the map preserves input order, and callers never
branch on timing.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Optional, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


class WorkerPool:
    """A process pool that degrades to sequential execution at jobs <= 1."""

    def __init__(self, jobs: int = 1):
        self.jobs = max(1, int(jobs))
        self._executor: Optional[ProcessPoolExecutor] = None

    def __enter__(self) -> "WorkerPool":
        if self.jobs > 1:
            self._executor = ProcessPoolExecutor(max_workers=self.jobs)
        return self

    def __exit__(self, *exc) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def map(self, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
        if self._executor is None or len(items) <= 1:
            return [fn(item) for item in items]
        chunk = max(1, len(items) // (self.jobs * 4))
        return list(self._executor.map(fn, items, chunksize=chunk))
