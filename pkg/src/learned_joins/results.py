"""Join results, phase breakdowns, and the software counters they carry."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LookupStats:
    """Counters for index probing: slots examined and model predictions made.

    ``search_steps`` counts slots examined while *locating* a key (exponential
    or binary search); scanning an equal-key run to collect duplicates is not
    counted. ``leaf_switches`` counts consecutive executed probes that landed
    in different leaf segments, a hardware-independent locality proxy.
    """

    search_steps: int = 0
    predictions: int = 0
    leaf_switches: int = 0

    def merge(self, other: "LookupStats") -> "LookupStats":
        self.search_steps += other.search_steps
        self.predictions += other.predictions
        self.leaf_switches += other.leaf_switches
        return self


@dataclass
class SortStats:
    """Counters for the partitioned comparator-network sort."""

    comparator_count: int = 0
    partitions_sorted: int = 0

    def merge(self, other: "SortStats") -> "SortStats":
        self.comparator_count += other.comparator_count
        self.partitions_sorted += other.partitions_sorted
        return self


class JoinResult:
    """Multiset of matched (payload_R, payload_S) pairs."""

    __slots__ = ("payloads_r", "payloads_s")

    def __init__(self, payloads_r=None, payloads_s=None):
        self.payloads_r = (
            np.empty(0, dtype=np.uint64)
            if payloads_r is None
            else np.asarray(payloads_r, dtype=np.uint64)
        )
        self.payloads_s = (
            np.empty(0, dtype=np.uint64)
            if payloads_s is None
            else np.asarray(payloads_s, dtype=np.uint64)
        )
        if self.payloads_r.shape != self.payloads_s.shape:
            raise ValueError("payload columns must have equal length")

    @property
    def count(self) -> int:
        return int(self.payloads_r.size)

    def canonical(self) -> np.ndarray:
        """Pairs as a (count, 2) array sorted lexicographically."""
        order = np.lexsort((self.payloads_s, self.payloads_r))
        return np.column_stack((self.payloads_r[order], self.payloads_s[order]))

    def same_multiset(self, other: "JoinResult") -> bool:
        if self.count != other.count:
            return False
        return bool(np.array_equal(self.canonical(), other.canonical()))

    @staticmethod
    def concatenate(parts: list["JoinResult"]) -> "JoinResult":
        if not parts:
            return JoinResult()
        return JoinResult(
            np.concatenate([p.payloads_r for p in parts]),
            np.concatenate([p.payloads_s for p in parts]),
        )

    def __repr__(self) -> str:
        return f"JoinResult(count={self.count})"


@dataclass
class PhaseBreakdown:
    """Per-phase wall times (seconds) plus software counters.

    Unused phases stay exactly 0. Sort-joins fill smpl/part/sort/mrge/join;
    indexed joins fill pred/srch.
    """

    smpl: float = 0.0
    part: float = 0.0
    sort: float = 0.0
    mrge: float = 0.0
    join: float = 0.0
    pred: float = 0.0
    srch: float = 0.0
    lookup_stats: LookupStats = field(default_factory=LookupStats)
    sort_stats: SortStats = field(default_factory=SortStats)

    def counters(self) -> dict[str, int]:
        return {
            "search_steps": self.lookup_stats.search_steps,
            "predictions": self.lookup_stats.predictions,
            "leaf_switches": self.lookup_stats.leaf_switches,
            "comparator_count": self.sort_stats.comparator_count,
            "partitions_sorted": self.sort_stats.partitions_sorted,
        }

    def as_dict(self) -> dict:
        return {
            "smpl": self.smpl,
            "part": self.part,
            "sort": self.sort,
            "mrge": self.mrge,
            "join": self.join,
            "pred": self.pred,
            "srch": self.srch,
            **self.counters(),
        }
