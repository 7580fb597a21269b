"""Classical join baselines and the brute-force reference oracle.

All joins return ``(JoinResult, PhaseBreakdown)`` and produce multisets
identical to :func:`nlj_oracle` on the same inputs. The worker count shapes
chunking only; results and counters do not depend on thread scheduling.
"""

from __future__ import annotations

import time

import numpy as np
from numba import njit, prange

from .data import Relation
from .learned_hash import SplineHashIndex
from .models import RadixSplineIndex, RecursiveModelIndex
from .results import JoinResult, LookupStats, PhaseBreakdown
from .util import as_key_array, chunk_bounds, expand_ranges, mix64, parallel_map

ORACLE_PAIR_LIMIT = 10**10


class OracleTooLargeError(ValueError):
    """|R| * |S| exceeds the nested-loop oracle guard."""


def _hash_bucket(keys: np.ndarray, table_len: int) -> np.ndarray:
    return (mix64(keys) % np.uint64(table_len)).astype(np.int64)


class ChainHashIndex:
    """Bucket-chained hash table over the documented 64-bit mix.

    Buckets hold ``bucket_size`` entries before chaining; the layout here is
    one contiguous chain per bucket in insertion order, which preserves the
    probe semantics.
    """

    def __init__(self, bucket_size: int = 4, table_len: int | None = None):
        if bucket_size < 1:
            raise ValueError("bucket_size must be >= 1")
        self.bucket_size = bucket_size
        self.table_len = table_len
        self.n = 0

    def fit(self, relation: Relation, workers: int = 1) -> "ChainHashIndex":
        self.n = len(relation)
        if self.table_len is None:
            self.table_len = max(1, self.n)
        if self.n == 0:
            self._starts = np.zeros(self.table_len + 1, dtype=np.int64)
            self._keys = np.empty(0, dtype=np.uint64)
            self._payloads = np.empty(0, dtype=np.uint64)
            return self
        bounds = chunk_bounds(self.n, workers)
        parts = parallel_map(
            lambda w: _hash_bucket(relation.keys[bounds[w] : bounds[w + 1]], self.table_len),
            range(workers),
            workers,
        )
        buckets = np.concatenate(parts)
        # merging per bucket in worker order stands in for latched appends
        order = np.argsort(buckets, kind="stable")
        self._keys = relation.keys[order]
        self._payloads = relation.payloads[order]
        counts = np.bincount(buckets, minlength=self.table_len)
        self._starts = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        return self

    def probe_batch(self, keys) -> tuple[np.ndarray, np.ndarray]:
        keys = as_key_array(keys)
        if self.n == 0 or keys.size == 0:
            return np.empty(0, dtype=np.uint64), np.empty(0, dtype=np.int64)
        buckets = _hash_bucket(keys, self.table_len)
        starts = self._starts[buckets]
        counts = self._starts[buckets + 1] - starts
        slot = expand_ranges(starts, counts)
        src = np.repeat(np.arange(keys.size, dtype=np.int64), counts)
        hit = self._keys[slot] == keys[src]
        return self._payloads[slot[hit]], src[hit]


def _probe_join(probe_fn, s: Relation, workers: int) -> JoinResult:
    """Probe S against a built R index chunk-by-chunk, combine in order."""
    bounds = chunk_bounds(len(s), workers)

    def one(w):
        lo, hi = bounds[w], bounds[w + 1]
        payloads, src = probe_fn(s.keys[lo:hi])
        return JoinResult(payloads, s.payloads[lo:hi][src])

    return JoinResult.concatenate(parallel_map(one, range(workers), workers))


def _bounded_binary_search(
    sorted_keys: np.ndarray,
    probes: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    stats: LookupStats | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Leftmost position >= key inside each [lo, hi] window, plus a found flag.

    Counts one probe per bisection step and one verification compare,
    mirroring the exponential-search accounting.
    """
    left = lo.astype(np.int64).copy()
    right = hi.astype(np.int64) + 1
    steps = 0
    active = left < right
    while np.any(active):
        mid = (left + right) >> 1
        steps += int(np.count_nonzero(active))
        below = np.zeros_like(active)
        below[active] = sorted_keys[mid[active]] < probes[active]
        left = np.where(below, mid + 1, left)
        right = np.where(active & ~below, mid, right)
        active = left < right
    steps += probes.size  # verification compare
    in_range = left < sorted_keys.size
    found = np.zeros(probes.size, dtype=np.bool_)
    found[in_range] = sorted_keys[left[in_range]] == probes[in_range]
    if stats is not None:
        stats.search_steps += steps
        stats.predictions += int(probes.size)
    return left, found


def rmi_inlj(
    r_sorted: Relation,
    model: RecursiveModelIndex,
    s: Relation,
    workers: int = 1,
) -> tuple[JoinResult, PhaseBreakdown]:
    """INLJ over a sorted relation indexed by a typical RMI: predict, then
    binary-search the misprediction window."""
    br = PhaseBreakdown()
    rk = r_sorted.keys

    def probe_fn(keys):
        t0 = time.perf_counter()
        _, lo, hi = model.predict_many(keys)
        t1 = time.perf_counter()
        left, found = _bounded_binary_search(rk, keys, lo, hi, br.lookup_stats)
        # duplicate-run collection; not counted as search probes
        right = np.searchsorted(rk, keys, side="right")
        counts = np.where(found, right - left, 0)
        slots = expand_ranges(left, counts)
        src = np.repeat(np.arange(keys.size, dtype=np.int64), counts)
        t2 = time.perf_counter()
        br.pred += t1 - t0
        br.srch += t2 - t1
        return r_sorted.payloads[slots], src

    result = _probe_join(probe_fn, s, workers)
    return result, br


def hash_inlj(
    r: Relation,
    s: Relation,
    bucket_size: int = 4,
    table_len: int | None = None,
    workers: int = 1,
) -> tuple[JoinResult, PhaseBreakdown]:
    """INLJ over a bucket-chained hash index built on R."""
    br = PhaseBreakdown()
    index = ChainHashIndex(bucket_size=bucket_size, table_len=table_len).fit(r)
    t0 = time.perf_counter()
    result = _probe_join(index.probe_batch, s, workers)
    br.join = time.perf_counter() - t0
    return result, br


def npj_join(r: Relation, s: Relation, workers: int = 1) -> tuple[JoinResult, PhaseBreakdown]:
    """Non-partitioned hash join: one shared table, build then probe phases.

    Workers chunk both relations; per-bucket inserts merge deterministically
    in worker order, the stand-in for per-bucket latching.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    br = PhaseBreakdown()
    t0 = time.perf_counter()
    index = ChainHashIndex(bucket_size=4).fit(r, workers=workers)
    t1 = time.perf_counter()
    result = _probe_join(index.probe_batch, s, workers)
    t2 = time.perf_counter()
    br.part = t1 - t0  # build phase
    br.join = t2 - t1
    return result, br


def _radix_partition_pass(
    keys: np.ndarray,
    payloads: np.ndarray,
    segment_bounds: np.ndarray,
    shift: int,
    bits: int,
    workers: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One radix pass inside each existing segment.

    Local histograms per (worker chunk, bucket) are combined into prefix
    sums that give each chunk its write offsets; the scatter is then
    contention-free. Returns the new segment bounds.
    """
    fanout = 1 << bits
    mask = np.uint64(fanout - 1)
    buckets = ((keys >> np.uint64(shift)) & mask).astype(np.int64)

    out_keys = np.empty_like(keys)
    out_payloads = np.empty_like(payloads)
    new_bounds = [0]
    for seg in range(segment_bounds.size - 1):
        a, b = int(segment_bounds[seg]), int(segment_bounds[seg + 1])
        seg_buckets = buckets[a:b]
        bounds = chunk_bounds(b - a, workers)
        hist = np.zeros((workers, fanout), dtype=np.int64)
        for w in range(workers):
            hist[w] = np.bincount(seg_buckets[bounds[w] : bounds[w + 1]], minlength=fanout)
        totals = hist.sum(axis=0)
        bucket_base = np.concatenate(([0], np.cumsum(totals)))[:-1]
        # offsets[w, t]: where chunk w's bucket-t run starts inside the segment
        offsets = bucket_base + np.cumsum(hist, axis=0) - hist
        for w in range(workers):
            lo, hi = bounds[w], bounds[w + 1]
            chunk = seg_buckets[lo:hi]
            order = np.argsort(chunk, kind="stable")
            run_counts = hist[w]
            dest = expand_ranges(a + offsets[w], run_counts)
            src = a + lo + order
            out_keys[dest] = keys[src]
            out_payloads[dest] = payloads[src]
        new_bounds.extend((a + bucket_base[1:]).tolist())
        new_bounds.append(b)
    return out_keys, out_payloads, np.asarray(new_bounds, dtype=np.int64)


def radix_join(
    r: Relation,
    s: Relation,
    passes: int = 2,
    bits_per_pass: int = 6,
    workers: int = 1,
) -> tuple[JoinResult, PhaseBreakdown]:
    """Partitioned hash join: multi-pass radix partitioning on low-order key
    bits, then a cache-local chained-hash join per final partition pair."""
    if passes not in (1, 2, 3):
        raise ValueError("passes must be 1, 2 or 3")
    br = PhaseBreakdown()
    t0 = time.perf_counter()
    rk, rp = r.keys, r.payloads
    sk, sp = s.keys, s.payloads
    r_bounds = np.asarray([0, len(r)], dtype=np.int64)
    s_bounds = np.asarray([0, len(s)], dtype=np.int64)
    for p in range(passes):
        shift = p * bits_per_pass
        rk, rp, r_bounds = _radix_partition_pass(rk, rp, r_bounds, shift, bits_per_pass, workers)
        sk, sp, s_bounds = _radix_partition_pass(sk, sp, s_bounds, shift, bits_per_pass, workers)
    br.part = time.perf_counter() - t0

    t0 = time.perf_counter()

    def join_partition(i):
        ra, rb = int(r_bounds[i]), int(r_bounds[i + 1])
        sa, sb = int(s_bounds[i]), int(s_bounds[i + 1])
        if ra == rb or sa == sb:
            return JoinResult()
        part_r = Relation(rk[ra:rb], rp[ra:rb])
        index = ChainHashIndex(bucket_size=4).fit(part_r)
        payloads, src = index.probe_batch(sk[sa:sb])
        return JoinResult(payloads, sp[sa:sb][src])

    parts = parallel_map(join_partition, range(r_bounds.size - 1), workers)
    result = JoinResult.concatenate(parts)
    br.join = time.perf_counter() - t0
    return result, br


def _merge_sorted(a_keys, a_payloads, b_keys, b_payloads):
    """Stable vectorized merge of two sorted runs."""
    pos_a = np.arange(a_keys.size, dtype=np.int64) + np.searchsorted(b_keys, a_keys, side="left")
    pos_b = np.arange(b_keys.size, dtype=np.int64) + np.searchsorted(a_keys, b_keys, side="right")
    keys = np.empty(a_keys.size + b_keys.size, dtype=np.uint64)
    payloads = np.empty_like(keys)
    keys[pos_a] = a_keys
    keys[pos_b] = b_keys
    payloads[pos_a] = a_payloads
    payloads[pos_b] = b_payloads
    return keys, payloads


def _sort_relation(rel: Relation, workers: int) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Chunk-sort with the library sort, then k-way merge. Returns
    (keys, payloads, sort_seconds, merge_seconds)."""
    bounds = chunk_bounds(len(rel), workers)

    def sort_chunk(w):
        lo, hi = bounds[w], bounds[w + 1]
        order = np.argsort(rel.keys[lo:hi], kind="stable")
        return rel.keys[lo:hi][order], rel.payloads[lo:hi][order]

    t0 = time.perf_counter()
    runs = parallel_map(sort_chunk, range(workers), workers)
    t1 = time.perf_counter()
    while len(runs) > 1:
        merged = []
        for i in range(0, len(runs) - 1, 2):
            merged.append(_merge_sorted(*runs[i], *runs[i + 1]))
        if len(runs) % 2:
            merged.append(runs[-1])
        runs = merged
    t2 = time.perf_counter()
    keys, payloads = runs[0]
    return keys, payloads, t1 - t0, t2 - t1


def _merge_join_sorted(rk, rp, sk, sp, workers: int) -> JoinResult:
    """Single merge-join pass over two globally sorted runs."""
    bounds = chunk_bounds(sk.size, workers)

    def one(w):
        lo, hi = bounds[w], bounds[w + 1]
        probe = sk[lo:hi]
        left = np.searchsorted(rk, probe, side="left")
        right = np.searchsorted(rk, probe, side="right")
        counts = right - left
        slots = expand_ranges(left, counts)
        src = np.repeat(np.arange(probe.size, dtype=np.int64), counts)
        return JoinResult(rp[slots], sp[lo:hi][src])

    return JoinResult.concatenate(parallel_map(one, range(workers), workers))


def smj_join(r: Relation, s: Relation, workers: int = 1) -> tuple[JoinResult, PhaseBreakdown]:
    """Generic multi-core sort-merge join: library-sort both relations,
    merge the runs, then one merge-join pass."""
    br = PhaseBreakdown()
    rk, rp, sort_r, mrge_r = _sort_relation(r, workers)
    sk, sp, sort_s, mrge_s = _sort_relation(s, workers)
    br.sort = sort_r + sort_s
    br.mrge = mrge_r + mrge_s
    t0 = time.perf_counter()
    result = _merge_join_sorted(rk, rp, sk, sp, workers)
    br.join = time.perf_counter() - t0
    return result, br


def sampled_hash_join(
    r: Relation,
    s: Relation,
    sample_rate: float = 0.02,
    workers: int = 1,
    seed: int = 0,
    max_error: int = 32,
    radix_bits: int = 18,
) -> tuple[JoinResult, PhaseBreakdown]:
    """Hash join whose hash function is a spline trained on an R sample taken
    during the join. Correct but collision-heavy when the sample misses the
    distribution; kept as the negative-result configuration.
    """
    if not 0.0 < sample_rate <= 1.0:
        raise ValueError("sample_rate must be in (0, 1]")
    if len(r) == 0 or len(s) == 0:
        return JoinResult(), PhaseBreakdown()
    br = PhaseBreakdown()
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    k = max(1, int(round(sample_rate * len(r))))
    sample = rng.choice(r.keys, size=k, replace=False)
    model = RadixSplineIndex(max_error=max_error, radix_bits=radix_bits).fit(np.sort(sample))
    t1 = time.perf_counter()
    index = SplineHashIndex.from_model(model, r, table_len=max(1, len(r)))
    t2 = time.perf_counter()
    result = _probe_join(index.probe_batch, s, workers)
    t3 = time.perf_counter()
    br.smpl = t1 - t0
    br.part = t2 - t1  # build phase
    br.join = t3 - t2
    return result, br


@njit(cache=True, parallel=True)
def _nlj_count(rk, sk, counts):
    for i in prange(rk.shape[0]):
        x = rk[i]
        c = 0
        for j in range(sk.shape[0]):
            if sk[j] == x:
                c += 1
        counts[i] = c


@njit(cache=True, parallel=True)
def _nlj_fill(rk, sk, rp, sp, offsets, out_r, out_s):
    for i in prange(rk.shape[0]):
        x = rk[i]
        o = offsets[i]
        for j in range(sk.shape[0]):
            if sk[j] == x:
                out_r[o] = rp[i]
                out_s[o] = sp[j]
                o += 1


def nlj_oracle(r: Relation, s: Relation) -> JoinResult:
    """Exhaustive double-loop reference join; every equivalence test's ground
    truth. Guarded against inputs beyond ORACLE_PAIR_LIMIT comparisons."""
    if len(r) * len(s) > ORACLE_PAIR_LIMIT:
        raise OracleTooLargeError(
            f"|R| * |S| = {len(r) * len(s)} exceeds the {ORACLE_PAIR_LIMIT} guard"
        )
    if len(r) == 0 or len(s) == 0:
        return JoinResult()
    counts = np.empty(len(r), dtype=np.int64)
    _nlj_count(r.keys, s.keys, counts)
    offsets = np.concatenate(([0], np.cumsum(counts)))
    out_r = np.empty(int(offsets[-1]), dtype=np.uint64)
    out_s = np.empty_like(out_r)
    _nlj_fill(r.keys, s.keys, r.payloads, s.payloads, offsets[:-1], out_r, out_s)
    return JoinResult(out_r, out_s)
