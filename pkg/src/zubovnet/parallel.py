"""Order-preserving process-pool map."""

import os
from concurrent.futures import ProcessPoolExecutor


def default_workers():
    return os.cpu_count() or 1


def pmap(fn, items, workers=1, chunksize=None):
    """``[fn(i) for i in items]``, optionally across worker processes.

    Results always come back in input order, so anything assembled from them
    is independent of the worker count.
    """
    items = list(items)
    if workers is None:
        workers = default_workers()
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    if chunksize is None:
        chunksize = max(1, len(items) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
