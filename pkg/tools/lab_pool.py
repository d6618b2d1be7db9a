# =========================================
# file: tools/lab_pool.py
# =========================================
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

from tools.lab_errors import LabError, PropagationError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def resolve_workers(workers: int | None) -> int:
    if workers is None or int(workers) <= 0:
        return os.cpu_count() or 1
    return int(workers)


def run_jobs(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None, what: str = "job") -> List[R]:
    """
    Map fn over independent items, results in input order.
    Every failure is collected; one PropagationError names all failing parameters.
    """
    items = list(items)
    n_workers = min(resolve_workers(workers), max(1, len(items)))

    def guarded(item):
        try:
            return True, fn(item)
        except LabError as exc:
            return False, exc

    if n_workers == 1:
        outcomes = [guarded(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(pool.map(guarded, items))

    failures = {repr(item): str(res) for item, (ok, res) in zip(items, outcomes) if not ok}
    if failures:
        for key, msg in failures.items():
            logger.error("%s %s failed: %s", what, key, msg)
        raise PropagationError(f"{len(failures)} of {len(items)} {what}s failed: {sorted(failures)}", failures)
    return [res for _, res in outcomes]
