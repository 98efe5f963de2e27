import os
from concurrent.futures import ProcessPoolExecutor


def default_jobs() -> int:
    return os.cpu_count() or 1


def ordered_map(func, items, jobs: int = 1):
    """Map ``func`` over ``items``; results come back in input order regardless
    of the worker count."""
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) < 2:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(func, items, chunksize=max(1, len(items) // (4 * jobs))))
