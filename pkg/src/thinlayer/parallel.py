"""Ordered thread-pool map shared by the sweep and integral builders."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence


def thread_count(requested: Optional[int] = None) -> int:
    """Worker count: the request (default up to 4 cores), capped by ``THINLAYER_THREADS``."""
    cap = None
    env = os.environ.get("THINLAYER_THREADS")
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            cap = None
    if requested is None:
        return cap if cap is not None else min(4, os.cpu_count() or 1)
    n = max(1, int(requested))
    return n if cap is None else min(n, cap)


def ordered_map(fn: Callable, items: Sequence, threads: Optional[int] = None) -> list:
    """``[fn(x) for x in items]`` evaluated concurrently, results in input order."""
    items = list(items)
    n = thread_count(threads)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
