"""Small worker-pool helper; results always come back in job order."""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

ENV_THREADS = "BERKNASH_THREADS"


def default_threads() -> int:
    raw = os.environ.get(ENV_THREADS, "").strip()
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def run_jobs(fn, jobs, threads: int | None = None) -> list:
    """Apply ``fn`` to every job; the output order matches ``jobs`` whatever the pool size."""
    jobs = list(jobs)
    n = default_threads() if threads is None else max(1, int(threads))
    if n == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, jobs))


def array_digest(*arrays) -> int:
    """Stable 32-bit digest of array contents, used to seed per-instance jobs."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return int.from_bytes(h.digest()[:4], "little")
