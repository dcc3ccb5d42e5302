"""
Thread helpers
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from tqdm.auto import tqdm

_logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(func: Callable[[T], R], items: Iterable[T], threads: int = 1, progress: bool = False, desc: Optional[str] = None) -> List[R]:
    """
    Apply ``func`` to every item, optionally on a thread pool.

    Results always come back in input order, so the outcome never depends on
    ``threads``.

    Args:
        func: pure function of one item
        items: the work list
        threads: worker count; 1 runs inline
        progress: show a tqdm progress bar
        desc: progress bar label

    Returns:
        list: ``[func(item) for item in items]``
    """
    items = list(items)
    if threads is None or threads < 1:
        raise ValueError("threads must be a positive integer")
    if threads == 1 or len(items) <= 1:
        iterator = tqdm(items, desc=desc, disable=not progress)
        return [func(item) for item in iterator]
    _logger.debug("Running %d tasks on %d threads", len(items), threads)
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(tqdm(executor.map(func, items), total=len(items), desc=desc, disable=not progress))
