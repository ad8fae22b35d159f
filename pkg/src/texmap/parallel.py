"""Deterministic worker-pool helper.

Results are assembled by item index, so the output is identical for any
worker count; only wall time changes.
"""

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, workers=1):
    """Apply ``fn`` to every item, optionally on a thread pool.

    Args:
        fn: Callable taking one item.
        items: Sequence of work items.
        workers: Thread count; 1 runs serially on the calling thread.

    Returns:
        List of results in input order.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
