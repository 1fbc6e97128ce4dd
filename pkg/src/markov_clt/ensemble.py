"""Deterministic parallel map over replicate chunks."""

from concurrent.futures import ThreadPoolExecutor

# fixed chunk size: the partition of replicates never depends on the thread count
CHUNK = 512


def run_chunks(job, items, threads=1, chunk=CHUNK):
    """Apply `job` to consecutive slices of `items`; results come back in slice order."""
    parts = [items[i : i + chunk] for i in range(0, len(items), chunk)]
    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(job, parts))
    return [job(p) for p in parts]
