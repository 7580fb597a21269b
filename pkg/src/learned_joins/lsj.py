"""Learned sort-based join: sample-train a CDF model per relation, range
partition across workers, sort each range by CDF bucketing plus a bitonic
comparator network, then merge-join each probe bucket against only its
overlapping build buckets.

One model per relation is reused across all phases by rescaling its
prediction: worker ranges use W partitions, the sort phase scales the same
model to the configured fan-out, and the join phase reuses the build side's
sort-phase scale to locate overlaps.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import Relation
from .models import RecursiveModelIndex, partition_index
from .results import JoinResult, PhaseBreakdown, SortStats
from .util import SENTINEL_KEY, chunk_bounds, expand_ranges, parallel_map


class ModelMismatchError(ValueError):
    """A sorted relation was joined under a model/scale it was not built with."""


@dataclass(frozen=True)
class LsjConfig:
    workers: int = 1
    sample_rate: float = 0.01
    fanout: int = 10000
    swwc: bool = True
    swwc_buf_len: int = 64
    overalloc: float = 0.02
    model_fanout: int | None = None
    seed: int = 0x1D5EED

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not 0.0 < self.sample_rate <= 1.0:
            raise ValueError("sample_rate must be in (0, 1]")
        if self.fanout < self.workers:
            raise ValueError("fanout must be >= workers")
        if self.swwc_buf_len < 1:
            raise ValueError("swwc_buf_len must be >= 1")
        if self.overalloc < 0.0:
            raise ValueError("overalloc must be >= 0")

    def effective_fanout(self) -> int:
        """Sort-phase partition count, aligned to a multiple of workers so
        worker boundaries never split a bucket."""
        return -(-self.fanout // self.workers) * self.workers

    def as_dict(self) -> dict:
        return {
            "workers": self.workers,
            "sample_rate": self.sample_rate,
            "fanout": self.fanout,
            "swwc": self.swwc,
            "swwc_buf_len": self.swwc_buf_len,
            "overalloc": self.overalloc,
            "model_fanout": self.model_fanout,
            "seed": self.seed,
        }


@dataclass
class PartitionedRelation:
    """Range-partitioned tuples: worker w owns ranges[w], a contiguous run."""

    keys: np.ndarray
    payloads: np.ndarray
    ranges: list[tuple[int, int]]
    histogram: np.ndarray  # (source worker, target worker) counts
    prefix_sums: np.ndarray  # write offsets per (source, target)
    overflow_total: int = 0


@dataclass
class SortedRelation:
    """Globally sorted tuples plus the bucket layout the sort produced."""

    keys: np.ndarray
    payloads: np.ndarray
    worker_ranges: list[tuple[int, int]]
    bucket_bounds: np.ndarray  # fanout+1 offsets into keys
    model_tag: tuple  # (model tag, scale) the buckets were formed under
    stats: SortStats = field(default_factory=SortStats)


def sample_train(
    relation: Relation,
    sample_rate: float,
    workers: int,
    seed: int,
    fanout: int | None = None,
) -> RecursiveModelIndex:
    """Train the relation's CDF model on a ~sample_rate uniform sample.

    Sample positions are drawn globally from the seed, so every worker
    contributes about sample_rate of its chunk and the model does not depend
    on the worker count; the sorted samples are merged and fitted once.
    """
    n = len(relation)
    if n == 0:
        raise ValueError("cannot sample an empty relation")
    if not 0.0 < sample_rate <= 1.0:
        raise ValueError("sample_rate must be in (0, 1]")
    total = int(round(sample_rate * n))
    if total == 0:
        # two-point fallback over the key extremes
        lo = relation.keys.min()
        hi = relation.keys.max()
        return RecursiveModelIndex(fanout=1).fit(np.sort(np.asarray([lo, hi], dtype=np.uint64)))
    rng = np.random.default_rng(seed)
    positions = rng.choice(n, size=total, replace=False)
    bounds = chunk_bounds(n, workers)
    pieces = parallel_map(
        lambda w: relation.keys[positions[(positions >= bounds[w]) & (positions < bounds[w + 1])]],
        range(workers),
        workers,
    )
    sample = np.sort(np.concatenate(pieces))
    if fanout is None:
        fanout = min(1000, max(1, total // 8))
    return RecursiveModelIndex(fanout=fanout).fit(sample)


def range_partition(
    relation: Relation,
    model: RecursiveModelIndex,
    workers: int,
    config: LsjConfig,
) -> PartitionedRelation:
    """Three-step range partitioning: local partition with local histograms,
    combined prefix sums, then sequential writes to the target ranges.

    The worker of a key is its fine sort-phase bucket divided down, which
    keeps worker boundaries exactly on bucket boundaries. Local partitions
    land in (1+overalloc)-sized primary arrays with per-target overflow
    lists merged at write time; with ``config.swwc`` the writes are staged
    through fixed-length buffers and flushed block-wise. Output is identical
    with swwc on or off.
    """
    n = len(relation)
    w_count = workers
    p_eff = -(-config.fanout // w_count) * w_count
    coarse = p_eff // w_count
    bounds = chunk_bounds(n, w_count)

    def local_pass(w):
        lo, hi = int(bounds[w]), int(bounds[w + 1])
        keys = relation.keys[lo:hi]
        if keys.size == 0:
            empty = np.empty(0, dtype=np.uint64)
            return empty, empty, np.zeros(w_count, dtype=np.int64), 0
        fine = partition_index(model, keys, p_eff)
        target = fine // coarse
        hist = np.bincount(target, minlength=w_count).astype(np.int64)
        order = np.argsort(target, kind="stable")
        primary_cap = int(math.ceil((1.0 + config.overalloc) * keys.size / w_count))
        overflow = int(np.maximum(hist - primary_cap, 0).sum())
        return keys[order], relation.payloads[lo:hi][order], hist, overflow

    locals_ = parallel_map(local_pass, range(w_count), w_count)
    hist = np.stack([loc[2] for loc in locals_])
    totals = hist.sum(axis=0)
    target_starts = np.concatenate(([0], np.cumsum(totals)))[:-1]
    offsets = target_starts + np.cumsum(hist, axis=0) - hist

    out_keys = np.empty(n, dtype=np.uint64)
    out_payloads = np.empty(n, dtype=np.uint64)

    def write_pass(w):
        lkeys, lpays, lhist, _ = locals_[w]
        seg_starts = np.concatenate(([0], np.cumsum(lhist)))
        for t in range(w_count):
            a, b = int(seg_starts[t]), int(seg_starts[t + 1])
            if a == b:
                continue
            dst = int(offsets[w, t])
            if config.swwc:
                buf_len = config.swwc_buf_len
                for blk in range(a, b, buf_len):
                    end = min(blk + buf_len, b)
                    staged_k = lkeys[blk:end].copy()
                    staged_p = lpays[blk:end].copy()
                    out_keys[dst + blk - a : dst + end - a] = staged_k
                    out_payloads[dst + blk - a : dst + end - a] = staged_p
            else:
                out_keys[dst : dst + b - a] = lkeys[a:b]
                out_payloads[dst : dst + b - a] = lpays[a:b]

    parallel_map(write_pass, range(w_count), w_count)
    ranges = [
        (int(target_starts[t]), int(target_starts[t] + totals[t])) for t in range(w_count)
    ]
    return PartitionedRelation(
        keys=out_keys,
        payloads=out_payloads,
        ranges=ranges,
        histogram=hist,
        prefix_sums=offsets,
        overflow_total=sum(loc[3] for loc in locals_),
    )


def _bitonic_network(mat_keys: np.ndarray, mat_payloads: np.ndarray) -> int:
    """Run the full bitonic sorting network along axis 1; payloads follow
    their keys. Returns the exact number of comparators applied."""
    rows, width = mat_keys.shape
    total = 0
    idx = np.arange(width)
    k = 2
    while k <= width:
        j = k >> 1
        while j >= 1:
            partner = idx ^ j
            m = partner > idx
            ii = idx[m]
            ll = partner[m]
            asc = (ii & k) == 0
            a = mat_keys[:, ii]
            b = mat_keys[:, ll]
            swap = np.where(asc, a > b, a < b)
            mat_keys[:, ii] = np.where(swap, b, a)
            mat_keys[:, ll] = np.where(swap, a, b)
            pa = mat_payloads[:, ii]
            pb = mat_payloads[:, ll]
            mat_payloads[:, ii] = np.where(swap, pb, pa)
            mat_payloads[:, ll] = np.where(swap, pa, pb)
            total += rows * ii.size
            j >>= 1
        k <<= 1
    return total


def cdf_bitonic_sort(
    keys: np.ndarray,
    payloads: np.ndarray,
    model,
    num_partitions: int,
) -> tuple[np.ndarray, np.ndarray, SortStats]:
    """Bucketize by the scaled CDF model, then bitonic-sort each bucket.

    Buckets are padded to the next power of two with the reserved maximum
    key so the comparator network runs on aligned sizes; sentinels sort to
    the tail and are stripped. The concatenated output is fully sorted.
    """
    stats = SortStats()
    n = keys.size
    if n == 0:
        return keys.copy(), payloads.copy(), stats
    bucket = partition_index(model, keys, num_partitions)
    order = np.argsort(bucket, kind="stable")
    bk = keys[order]
    bp = payloads[order]
    counts = np.bincount(bucket, minlength=num_partitions)
    starts = np.concatenate(([0], np.cumsum(counts)))[:-1]
    nonempty = np.flatnonzero(counts)
    sizes = counts[nonempty]
    stats.partitions_sorted += int(nonempty.size)

    exponent = np.ceil(np.log2(np.maximum(sizes, 1))).astype(np.int64)
    padded = np.left_shift(np.int64(1), exponent)
    out_k = np.empty_like(bk)
    out_p = np.empty_like(bp)
    for width in np.unique(padded):
        sel = padded == width
        s_starts = starts[nonempty[sel]]
        s_sizes = sizes[sel]
        rows = int(sel.sum())
        mat_k = np.full((rows, int(width)), SENTINEL_KEY, dtype=np.uint64)
        mat_p = np.zeros((rows, int(width)), dtype=np.uint64)
        src = expand_ranges(s_starts, s_sizes)
        dst = expand_ranges(np.arange(rows, dtype=np.int64) * int(width), s_sizes)
        mat_k.reshape(-1)[dst] = bk[src]
        mat_p.reshape(-1)[dst] = bp[src]
        stats.comparator_count += _bitonic_network(mat_k, mat_p)
        out_k[src] = mat_k.reshape(-1)[dst]
        out_p[src] = mat_p.reshape(-1)[dst]
    return out_k, out_p, stats


def _sort_phase(
    part: PartitionedRelation, model, scale: int, workers: int
) -> SortedRelation:
    def one(w):
        a, b = part.ranges[w]
        return cdf_bitonic_sort(part.keys[a:b], part.payloads[a:b], model, scale)

    runs = parallel_map(one, range(workers), workers)
    keys = np.concatenate([r[0] for r in runs]) if runs else np.empty(0, dtype=np.uint64)
    payloads = np.concatenate([r[1] for r in runs]) if runs else np.empty(0, dtype=np.uint64)
    stats = SortStats()
    for r in runs:
        stats.merge(r[2])
    bucket = partition_index(model, keys, scale)
    bounds = np.concatenate(([0], np.cumsum(np.bincount(bucket, minlength=scale)))).astype(
        np.int64
    )
    return SortedRelation(
        keys=keys,
        payloads=payloads,
        worker_ranges=part.ranges,
        bucket_bounds=bounds,
        model_tag=(model.tag, scale),
        stats=stats,
    )


def chunked_join(
    r_sorted: SortedRelation,
    s_sorted: SortedRelation,
    model_r,
    scale_r: int,
    workers: int = 1,
) -> JoinResult:
    """Merge-join each probe bucket of S against its overlapping R buckets.

    The first/last key of every S bucket is mapped through R's model at R's
    sort-phase scale to find the first and last overlapping R buckets; the
    bucket range between them (inclusive) is the only R data examined.
    """
    if r_sorted.model_tag != (model_r.tag, scale_r):
        raise ModelMismatchError(
            "R was bucketed under a different model or scale than the join received"
        )
    rb = r_sorted.bucket_bounds
    rk = r_sorted.keys
    rp = r_sorted.payloads
    sb = s_sorted.bucket_bounds
    sk = s_sorted.keys
    sp = s_sorted.payloads

    nz = np.flatnonzero(np.diff(sb))
    if nz.size == 0 or rk.size == 0:
        return JoinResult()
    firsts = sk[sb[nz]]
    lasts = sk[sb[nz + 1] - 1]
    f_r = partition_index(model_r, firsts, scale_r)
    l_r = partition_index(model_r, lasts, scale_r)

    worker_starts = np.asarray([a for a, _ in s_sorted.worker_ranges], dtype=np.int64)
    owner = np.searchsorted(worker_starts, sb[nz], side="right") - 1

    def one(w):
        mine = np.flatnonzero(owner == w)
        parts = []
        for t in mine:
            b = nz[t]
            a, e = int(sb[b]), int(sb[b + 1])
            win_lo, win_hi = int(rb[f_r[t]]), int(rb[l_r[t] + 1])
            if win_lo == win_hi:
                continue
            window = rk[win_lo:win_hi]
            probe = sk[a:e]
            left = np.searchsorted(window, probe, side="left")
            right = np.searchsorted(window, probe, side="right")
            cnt = right - left
            slots = expand_ranges(win_lo + left, cnt)
            src = np.repeat(np.arange(probe.size, dtype=np.int64), cnt)
            parts.append(JoinResult(rp[slots], sp[a:e][src]))
        return JoinResult.concatenate(parts)

    return JoinResult.concatenate(parallel_map(one, range(workers), workers))


def lsj_join(
    r: Relation, s: Relation, config: LsjConfig | None = None
) -> tuple[JoinResult, PhaseBreakdown]:
    """Full learned sort-based join; both relations are range-partitioned,
    sorted, and chunk-joined. There is no merge phase."""
    config = config or LsjConfig()
    br = PhaseBreakdown()
    if len(r) == 0 or len(s) == 0:
        return JoinResult(), br
    w = config.workers
    scale = config.effective_fanout()

    t0 = time.perf_counter()
    model_r = sample_train(r, config.sample_rate, w, config.seed, config.model_fanout)
    model_s = sample_train(
        s, config.sample_rate, w, config.seed ^ 0x5DEECE66D, config.model_fanout
    )
    t1 = time.perf_counter()
    part_r = range_partition(r, model_r, w, config)
    part_s = range_partition(s, model_s, w, config)
    t2 = time.perf_counter()
    r_sorted = _sort_phase(part_r, model_r, scale, w)
    s_sorted = _sort_phase(part_s, model_s, scale, w)
    t3 = time.perf_counter()
    result = chunked_join(r_sorted, s_sorted, model_r, scale, w)
    t4 = time.perf_counter()

    br.smpl = t1 - t0
    br.part = t2 - t1
    br.sort = t3 - t2
    br.join = t4 - t3
    br.sort_stats = SortStats().merge(r_sorted.stats).merge(s_sorted.stats)
    return result, br


@dataclass(frozen=True)
class LsjCostParams:
    """Inputs of the per-worker cost estimate."""

    n_r: int
    n_s: int
    s_r: int = 0
    s_s: int = 0
    p_r: int = 1
    p_s: int = 1
    o_r: int = 0
    o_s: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.p_r < self.workers or self.p_s < self.workers:
            raise ValueError("partition counts must be >= workers")
        if not (0 <= self.o_r <= self.workers and 0 <= self.o_s <= self.workers):
            raise ValueError("overlap counts must be within [0, workers]")


def _log2_pos(v: float) -> float:
    return math.log2(v) if v > 1.0 else 0.0


def estimate_lsj_cost(params: LsjCostParams) -> float:
    """Per-worker cost: sampling/model build, partitioning, sorting, joining.

    cost = (S_R+S_S)/W + S_R log S_R + S_S log S_S
         + (N_R+N_S)/W
         + (N_R/W) log^2(N_R/P_R) + (N_S/W) log^2(N_S/P_S)
         + (N_R/W) O_S + (N_S/W) O_R
    with base-2 logs clamped to 0 for arguments <= 1.
    """
    w = params.workers
    sampling = (
        (params.s_r + params.s_s) / w
        + params.s_r * _log2_pos(params.s_r)
        + params.s_s * _log2_pos(params.s_s)
    )
    partitioning = (params.n_r + params.n_s) / w
    sorting = (params.n_r / w) * _log2_pos(params.n_r / params.p_r) ** 2 + (
        params.n_s / w
    ) * _log2_pos(params.n_s / params.p_s) ** 2
    joining = (params.n_r / w) * params.o_s + (params.n_s / w) * params.o_r
    return sampling + partitioning + sorting + joining
