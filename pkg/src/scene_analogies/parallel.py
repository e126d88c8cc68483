"""Worker-count control for internal parallelism.

SA_THREADS caps the number of workers used by nearest-neighbor queries
(0 or unset = one per CPU).  All parallel code paths are over independent
work items, so results are identical for any worker count.
"""

from __future__ import annotations

import os


def worker_count() -> int:
    raw = os.environ.get("SA_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, n)
