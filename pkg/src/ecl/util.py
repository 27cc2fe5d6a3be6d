"""Small shared helpers: worker-pool mapping and canonical float formatting."""

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    """Parallelism cap from the ECL_THREADS environment variable (default 1)."""
    raw = os.environ.get("ECL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def parallel_map(fn, items):
    """Ordered map, threaded only when ECL_THREADS allows more than one worker.

    Work items must be independent pure computations; results are assembled in
    input order, so output never depends on scheduling.
    """
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))


def format_float(x: float) -> str:
    """Fixed 17-significant-digit decimal form used by all file emission."""
    if x != x:
        raise ValueError("cannot serialize NaN")
    if x in (float("inf"), float("-inf")):
        raise ValueError("cannot serialize infinity")
    if x == int(x) and abs(x) < 1e16:
        return repr(float(x))
    return format(x, ".17g")
