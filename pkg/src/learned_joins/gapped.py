"""Read-only gapped index: model-based insertion into gapped key/payload
arrays, exponential-search lookup, and an occupancy bitmap as ground truth.

Gap slots hold a copy of the nearest real key to their left, so every
comparison against the gapped key array is well-defined and the array stays
globally nondecreasing; the bitmap decides what is real.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .data import Relation
from .models import RecursiveModelIndex
from .results import LookupStats
from .util import as_key_array


def exponential_search(view, start: int, key, stats: LookupStats | None = None):
    """Find a slot with view[slot] == key, doubling outward from ``start``.

    Returns the slot or None. Every slot examined counts as one probe;
    probes are added to ``stats.search_steps`` when given.
    """
    view = np.asarray(view)
    n = view.size
    key = np.uint64(key)
    probes = 1
    slot = None
    v = view[start]
    if v == key:
        slot = start
    else:
        if v < key:
            prev, step, lo, hi = start, 1, start + 1, n
            while True:
                idx = start + step
                if idx >= n:
                    lo, hi = prev + 1, n
                    break
                probes += 1
                w = view[idx]
                if w < key:
                    prev, step = idx, step << 1
                elif w == key:
                    slot = idx
                    break
                else:
                    lo, hi = prev + 1, idx
                    break
        else:
            prev, step, lo, hi = start, 1, 0, start
            while True:
                idx = start - step
                if idx < 0:
                    lo, hi = 0, prev
                    break
                probes += 1
                w = view[idx]
                if w > key:
                    prev, step = idx, step << 1
                elif w == key:
                    slot = idx
                    break
                else:
                    lo, hi = idx + 1, prev
                    break
        if slot is None:
            while lo < hi:
                mid = (lo + hi) >> 1
                probes += 1
                if view[mid] < key:
                    lo = mid + 1
                else:
                    hi = mid
            if lo < n:
                probes += 1
                if view[lo] == key:
                    slot = lo
    if stats is not None:
        stats.search_steps += probes
    return slot


@njit(cache=True)
def _search_batch(gkeys, slots0, keys, out_slot, out_probes):
    # mirrors exponential_search exactly, one lane per probe key
    n = gkeys.shape[0]
    for t in range(keys.shape[0]):
        key = keys[t]
        start = slots0[t]
        probes = 1
        slot = -1
        lo = 0
        hi = 0
        v = gkeys[start]
        if v == key:
            slot = start
        else:
            if v < key:
                prev = start
                step = 1
                lo = start + 1
                hi = n
                while True:
                    idx = start + step
                    if idx >= n:
                        lo = prev + 1
                        hi = n
                        break
                    probes += 1
                    w = gkeys[idx]
                    if w < key:
                        prev = idx
                        step <<= 1
                    elif w == key:
                        slot = idx
                        break
                    else:
                        lo = prev + 1
                        hi = idx
                        break
            else:
                prev = start
                step = 1
                lo = 0
                hi = start
                while True:
                    idx = start - step
                    if idx < 0:
                        lo = 0
                        hi = prev
                        break
                    probes += 1
                    w = gkeys[idx]
                    if w > key:
                        prev = idx
                        step <<= 1
                    elif w == key:
                        slot = idx
                        break
                    else:
                        lo = idx + 1
                        hi = prev
                        break
            if slot < 0:
                while lo < hi:
                    mid = (lo + hi) >> 1
                    probes += 1
                    if gkeys[mid] < key:
                        lo = mid + 1
                    else:
                        hi = mid
                if lo < n:
                    probes += 1
                    if gkeys[lo] == key:
                        slot = lo
        out_slot[t] = slot
        out_probes[t] = probes


@njit(cache=True)
def _match_runs(gkeys, bitmap, slots, keys, out_left, out_count):
    # leftmost slot of each equal-key run plus its number of real entries
    n = gkeys.shape[0]
    for t in range(slots.shape[0]):
        s = slots[t]
        if s < 0:
            out_left[t] = -1
            out_count[t] = 0
            continue
        key = keys[t]
        left = s
        while left > 0 and gkeys[left - 1] == key:
            left -= 1
        right = s
        while right + 1 < n and gkeys[right + 1] == key:
            right += 1
        c = 0
        for i in range(left, right + 1):
            if bitmap[i]:
                c += 1
        out_left[t] = left
        out_count[t] = c


@njit(cache=True)
def _collect_run_payloads(gkeys, bitmap, gpayloads, lefts, keys, offsets, out_pay, out_src):
    n = gkeys.shape[0]
    for t in range(lefts.shape[0]):
        left = lefts[t]
        if left < 0:
            continue
        key = keys[t]
        o = offsets[t]
        i = left
        while i < n and gkeys[i] == key:
            if bitmap[i]:
                out_pay[o] = gpayloads[i]
                out_src[o] = t
                o += 1
            i += 1


class GappedRmiIndex:
    """Gapped arrays filled by model-based insertion, probed via the RMI plus
    exponential search. Read-only once fitted; concurrent lookups are safe.
    """

    def __init__(self, gap_factor: float = 4.0, rmi_fanout: int = 1000):
        if gap_factor < 1.0:
            raise ValueError("gap_factor must be >= 1")
        self.gap_factor = float(gap_factor)
        self.rmi_fanout = int(rmi_fanout)
        self.n = 0

    def get_params(self) -> dict:
        return {"gap_factor": self.gap_factor, "rmi_fanout": self.rmi_fanout}

    def fit(self, relation: Relation) -> "GappedRmiIndex":
        n = len(relation)
        self.n = n
        if n == 0:
            self.rmi = None
            self.gkeys = np.empty(0, dtype=np.uint64)
            self.gpayloads = np.empty(0, dtype=np.uint64)
            self.bitmap = np.empty(0, dtype=np.bool_)
            self.slot_count = 0
            return self

        srt = relation.sorted_by_key()
        keys, payloads = srt.keys, srt.payloads
        self.rmi = RecursiveModelIndex(fanout=self.rmi_fanout).fit(keys)
        L = int(round(self.gap_factor * n))
        self.slot_count = L

        pos, _, _ = self.rmi.predict_many(keys)
        target = np.rint(pos.astype(np.float64) / n * L).astype(np.int64)
        idx = np.arange(n, dtype=np.int64)
        # slot_i = max(target_i, slot_{i-1}+1), then capped so the tail fits
        slots = np.maximum.accumulate(target - idx) + idx
        slots = np.minimum(slots, L - n + idx)

        bitmap = np.zeros(L, dtype=np.bool_)
        bitmap[slots] = True
        self.bitmap = bitmap
        src = np.zeros(L, dtype=np.uint64)
        src[slots] = keys
        fill = np.maximum.accumulate(np.where(bitmap, np.arange(L), -1))
        fill[fill < 0] = slots[0]  # slots before the first entry copy it
        self.gkeys = src[fill]
        gpay = np.zeros(L, dtype=np.uint64)
        gpay[slots] = payloads
        self.gpayloads = gpay
        return self

    def _predict_slots(self, keys: np.ndarray) -> np.ndarray:
        pos, _, _ = self.rmi.predict_many(keys)
        slots = np.rint(pos.astype(np.float64) / self.n * self.slot_count)
        return np.clip(slots, 0, self.slot_count - 1).astype(np.int64)

    def leaf_of(self, keys) -> np.ndarray:
        """Leaf-model segment each key routes to (locality bookkeeping)."""
        return self.rmi.route_many(keys)

    def lookup(self, key, stats: LookupStats | None = None):
        """Payload of ``key``, or None if absent. Duplicates: first real slot."""
        if self.n == 0:
            return None
        key = np.uint64(key)
        slot0 = int(self._predict_slots(np.asarray([key]))[0])
        if stats is not None:
            stats.predictions += 1
        slot = exponential_search(self.gkeys, slot0, key, stats)
        if slot is None:
            return None
        while slot > 0 and self.gkeys[slot - 1] == key:
            slot -= 1
        # leftmost slot of an equal run is always a real entry
        return np.uint64(self.gpayloads[slot])

    def lookup_range(self, key, stats: LookupStats | None = None) -> np.ndarray:
        """All payloads stored under ``key``, left to right."""
        if self.n == 0:
            return np.empty(0, dtype=np.uint64)
        payloads, _, _ = self.lookup_batch(np.asarray([key], dtype=np.uint64), stats)
        return payloads

    def predict_slots(self, keys) -> np.ndarray:
        """Model-predicted gapped-array slot for each probe key."""
        return self._predict_slots(as_key_array(keys))

    def search_from(
        self, slots0: np.ndarray, keys: np.ndarray, stats: LookupStats | None = None
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Exponential-search every probe key from its predicted slot.

        Returns (payloads, source_index, found) covering all matches;
        ``source_index`` maps each emitted payload back to its probe
        position. Probe counting matches the scalar
        :func:`exponential_search`; equal-run scans are not counted.
        """
        out_slot = np.empty(keys.size, dtype=np.int64)
        out_probes = np.empty(keys.size, dtype=np.int64)
        _search_batch(self.gkeys, slots0, keys, out_slot, out_probes)

        lefts = np.empty(keys.size, dtype=np.int64)
        counts = np.empty(keys.size, dtype=np.int64)
        _match_runs(self.gkeys, self.bitmap, out_slot, keys, lefts, counts)
        offsets = np.concatenate(([0], np.cumsum(counts)))
        total = int(offsets[-1])
        out_pay = np.empty(total, dtype=np.uint64)
        out_src = np.empty(total, dtype=np.int64)
        _collect_run_payloads(
            self.gkeys, self.bitmap, self.gpayloads, lefts, keys, offsets[:-1], out_pay, out_src
        )
        if stats is not None:
            stats.search_steps += int(out_probes.sum())
            stats.predictions += int(keys.size)
        return out_pay, out_src, counts > 0

    def lookup_batch(
        self, keys, stats: LookupStats | None = None
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All matches for a probe batch: predict slots, then search."""
        keys = as_key_array(keys)
        if self.n == 0 or keys.size == 0:
            return (
                np.empty(0, dtype=np.uint64),
                np.empty(0, dtype=np.int64),
                np.zeros(keys.size, dtype=np.bool_),
            )
        slots0 = self._predict_slots(keys)
        if stats is not None:
            leaf = self.leaf_of(keys)
            stats.leaf_switches += int(np.count_nonzero(np.diff(leaf) != 0))
        return self.search_from(slots0, keys, stats)


def build_grmi(relation: Relation, gap_factor: float = 4.0, rmi_fanout: int = 1000) -> GappedRmiIndex:
    return GappedRmiIndex(gap_factor=gap_factor, rmi_fanout=rmi_fanout).fit(relation)
