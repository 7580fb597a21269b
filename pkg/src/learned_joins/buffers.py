"""Request buffers: batch probe keys per RMI leaf to improve locality.

Each leaf model owns a fixed-capacity buffer. Incoming probe keys are routed
by the root model; a full buffer is flushed by answering its keys
consecutively, and at end-of-stream all buffers flush in depth-first (leaf
id) order. Results are therefore delivered flush-by-flush: the multiset
matches per-key lookups, the order does not.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gapped import GappedRmiIndex
from .results import LookupStats
from .util import as_key_array

DEFAULT_BUFFER_CAP = 200


@dataclass(frozen=True)
class BufferPlan:
    """Buffer capacities plus the analytic size recurrence metadata.

    ``analytic_sizes`` maps a subtree's model count n' to S(n') where
    S(n') = n' + 2m*S(n'/m) and S(x) = 0 for x <= m; the root buffer is
    n + S(n). Those sizes are stated in model counts and are analysis
    metadata; the working per-buffer capacity in probe keys is ``cap``.
    ``cache_line_bytes`` / ``cache_capacity_bytes`` belong to the same
    analysis and play no runtime role.
    """

    n_models: int
    fanout: int
    cap: int = DEFAULT_BUFFER_CAP
    analytic_sizes: dict = field(default_factory=dict)
    root_buffer_size: float = 0.0
    cache_line_bytes: int = 64
    cache_capacity_bytes: int = 1 << 15


def analytic_buffer_size(n_models: float, fanout: int) -> float:
    """S(n) from the size recurrence; exact on power-of-fanout sizes."""
    if n_models <= fanout:
        return 0.0
    child = n_models / fanout if n_models % fanout else n_models // fanout
    return n_models + 2 * fanout * analytic_buffer_size(child, fanout)


def plan_buffers(n_models: int, fanout: int, cap: int = DEFAULT_BUFFER_CAP) -> BufferPlan:
    if n_models < 1 or fanout < 1:
        raise ValueError("n_models and fanout must be >= 1")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    sizes = {}
    size = n_models
    while True:
        sizes[size] = analytic_buffer_size(size, fanout)
        if size <= fanout:
            break
        size = size / fanout if size % fanout else size // fanout
    return BufferPlan(
        n_models=n_models,
        fanout=fanout,
        cap=cap,
        analytic_sizes=sizes,
        root_buffer_size=n_models + sizes[n_models],
    )


def _flush_schedule(leaf_ids: np.ndarray, cap: int):
    """Batches of stream positions in execution order.

    A buffer flushes when its cap-th key arrives; leftovers flush at
    end-of-stream in ascending leaf order (depth-first for a 2-level tree).
    """
    order = np.argsort(leaf_ids, kind="stable")
    sorted_leaf = leaf_ids[order]
    bounds = np.flatnonzero(np.diff(sorted_leaf)) + 1
    starts = np.concatenate(([0], bounds))
    ends = np.concatenate((bounds, [leaf_ids.size]))

    full = []
    final = []
    for a, b in zip(starts, ends):
        leaf = int(sorted_leaf[a])
        run = order[a:b]
        off = 0
        while b - a - off >= cap:
            batch = run[off : off + cap]
            full.append((int(batch[-1]), leaf, batch))
            off += cap
        if off < b - a:
            final.append((leaf, run[off:]))
    full.sort(key=lambda item: item[0])
    batches = [(leaf, batch) for _, leaf, batch in full]
    batches.extend(final)
    return batches


def buffered_probe(
    index: GappedRmiIndex,
    keys,
    plan: BufferPlan,
    sink,
    *,
    collect: str = "first",
) -> LookupStats:
    """Probe ``keys`` through per-leaf request buffers.

    ``sink`` is invoked once per flush, from the calling thread only. With
    ``collect="first"`` it receives (tags, payloads, found): exactly one
    entry per buffered key, payload zero where ``found`` is False. With
    ``collect="all"`` it receives (tags, payloads) covering every match
    (duplicates included). The result multiset equals unbuffered per-key
    lookups for any stream order and any cap >= 1.
    """
    if collect not in ("first", "all"):
        raise ValueError("collect must be 'first' or 'all'")
    keys = as_key_array(keys)
    stats = LookupStats()
    if keys.size == 0:
        return stats
    if index.n == 0:
        tags = np.arange(keys.size, dtype=np.int64)
        if collect == "first":
            sink(tags, np.zeros(keys.size, dtype=np.uint64), np.zeros(keys.size, dtype=np.bool_))
        else:
            sink(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.uint64))
        return stats

    leaf_ids = index.leaf_of(keys)
    prev_leaf = -1
    for leaf, tags in _flush_schedule(leaf_ids, plan.cap):
        if prev_leaf >= 0 and leaf != prev_leaf:
            stats.leaf_switches += 1
        prev_leaf = leaf
        # within one flush every key shares the leaf, so the per-batch stats
        # contribute probes and predictions but no extra switches
        payloads, src, found = index.lookup_batch(keys[tags], stats)
        if collect == "first":
            first_pay = np.zeros(tags.size, dtype=np.uint64)
            probe, first_at = np.unique(src, return_index=True)
            first_pay[probe] = payloads[first_at]
            sink(tags, first_pay, found)
        else:
            sink(tags[src], payloads)
    return stats
