"""Chunked thread-pool execution over index ranges.

Kernels are numba ``nogil`` functions that write into preallocated per-index
slots, so the result never depends on the number of workers or on the order
in which chunks finish.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

DEFAULT_CHUNK = 256


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def chunk_ranges(total: int, chunk: int = DEFAULT_CHUNK) -> list[tuple[int, int]]:
    chunk = max(1, int(chunk))
    return [(s, min(s + chunk, total)) for s in range(0, total, chunk)]


def run_chunks(work: Callable[[int, int], object], total: int, workers: int = 1, chunk: int = DEFAULT_CHUNK) -> list:
    """Call ``work(start, stop)`` over fixed chunks; results come back in index order."""
    ranges = chunk_ranges(total, chunk)
    workers = max(1, int(workers))
    if workers == 1 or len(ranges) <= 1:
        return [work(a, b) for a, b in ranges]
    with ThreadPoolExecutor(max_workers=min(workers, len(ranges))) as pool:
        return list(pool.map(lambda r: work(*r), ranges))
