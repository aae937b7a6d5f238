"""Deterministic worker-pool mapping for independent numeric tasks.

Results are returned in input order regardless of worker count, and every
task is isolated: a failing task yields an error record instead of aborting
its siblings.  Tasks must be module-level callables with picklable
arguments (spawn start method, so no forked BLAS state is shared).
"""

from __future__ import annotations

import multiprocessing
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

__all__ = ["TaskOutcome", "run_tasks"]


@dataclass
class TaskOutcome:
    name: str
    ok: bool
    value: Any = None
    error: Optional[str] = None


def _call(task: tuple[str, Callable, tuple]) -> TaskOutcome:
    name, fn, args = task
    try:
        return TaskOutcome(name=name, ok=True, value=fn(*args))
    except Exception as exc:
        tb = traceback.format_exc(limit=4)
        return TaskOutcome(name=name, ok=False, error=f"{exc}\n{tb}")


def run_tasks(
    tasks: Sequence[tuple[str, Callable, tuple]], workers: int = 1
) -> list[TaskOutcome]:
    """Run (name, fn, args) tasks, merging results in input order."""
    if workers <= 1 or len(tasks) <= 1:
        return [_call(t) for t in tasks]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks)), mp_context=ctx) as ex:
        return list(ex.map(_call, tasks))
