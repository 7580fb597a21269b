"""Shared helpers: key-array validation, 64-bit mixing, index expansion."""

from __future__ import annotations

import numpy as np

# Reserved padding value; never a data key. Comparator networks pad with it.
SENTINEL_KEY = np.uint64(0xFFFF_FFFF_FFFF_FFFF)

_MIX_MULT = np.uint64(0x9E3779B97F4A7C15)  # 2^64 / golden ratio
_MIX_M1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_M2 = np.uint64(0x94D049BB133111EB)


def as_key_array(keys, *, name: str = "keys") -> np.ndarray:
    """Coerce to a 1-D uint64 array, rejecting the reserved sentinel value."""
    arr = np.asarray(keys, dtype=np.uint64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if arr.size and arr.max() == SENTINEL_KEY:
        raise ValueError(f"{name} may not contain the reserved maximum key")
    return arr


def check_sorted(keys: np.ndarray, *, name: str = "keys") -> None:
    if keys.size > 1 and np.any(keys[:-1] > keys[1:]):
        raise ValueError(f"{name} must be sorted ascending")


def mix64(x) -> np.ndarray | np.uint64:
    """SplitMix64 finalizer: a fixed, documented 64-bit multiplicative mix.

    Used as the hash function of the chained hash index and as the payload
    PRF, so runs are reproducible without stored randomness.
    """
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z + _MIX_MULT).astype(np.uint64)
        z = (z ^ (z >> np.uint64(30))) * _MIX_M1
        z = (z ^ (z >> np.uint64(27))) * _MIX_M2
        z = z ^ (z >> np.uint64(31))
    if np.ndim(x) == 0:
        return np.uint64(z)
    return z


def parallel_map(fn, items, workers: int) -> list:
    """Run ``fn`` over ``items`` on a worker pool, results in input order.

    Phase barriers fall out of the gather: the call returns only when every
    item finished. workers == 1 or a single item runs inline.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def chunk_bounds(n: int, workers: int) -> np.ndarray:
    """Equi-sized chunk boundaries: workers+1 offsets covering [0, n)."""
    return np.linspace(0, n, workers + 1).astype(np.int64)


def expand_ranges(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Concatenate [s, s+c) ranges into one index vector without a Python loop.

    expand_ranges([2, 7], [3, 2]) -> [2, 3, 4, 7, 8]
    """
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    out = np.repeat(np.asarray(starts, dtype=np.int64), counts)
    offsets = np.arange(total, dtype=np.int64)
    offsets -= np.repeat(np.cumsum(counts) - counts, counts)
    return out + offsets
