import logging
import multiprocessing
from typing import Callable, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def map_samples(fn: Callable[[T], R], tasks: Sequence[T], workers: int = 1) -> list[R]:
    """
    Apply fn to every task, in task order.

    With more than one worker the tasks run in a spawned process pool; fn and
    the tasks must be picklable. Results never depend on the worker count.
    """
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]

    processes = min(workers, len(tasks))
    logger.info(f"Dispatching {len(tasks)} samples to {processes} worker processes")
    ctx = multiprocessing.get_context("spawn")
    with ctx.Pool(processes=processes) as pool:
        return pool.map(fn, tasks, chunksize=1)
