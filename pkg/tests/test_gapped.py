import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from learned_joins import (
    DatasetSpec,
    GappedRmiIndex,
    LookupStats,
    Relation,
    build_grmi,
    exponential_search,
    gen_dataset,
    make_relation,
    train_rmi,
)


def small_relation(keys, payload_seed=3):
    return make_relation(np.asarray(keys, dtype=np.uint64), payload_seed)


class TestBuild:
    def test_default_gap_factor_is_four(self):
        assert GappedRmiIndex().gap_factor == 4.0

    def test_dense_packing_at_gap_one(self):
        rel = small_relation(gen_dataset(DatasetSpec("unif", 500, 2)))
        idx = build_grmi(rel, gap_factor=1.0, rmi_fanout=16)
        assert np.array_equal(idx.gkeys, np.sort(rel.keys))
        assert idx.bitmap.all()

    def test_perfect_model_places_near_double(self):
        rel = small_relation(np.arange(10))
        idx = build_grmi(rel, gap_factor=2.0, rmi_fanout=1)
        slots = np.flatnonzero(idx.bitmap)
        # entry k lands in the 2k +/- 1 neighbourhood, strictly ordered
        assert np.all(np.abs(slots - 2 * np.arange(10)) <= 1)
        assert np.all(np.diff(slots) >= 1)

    def test_rejects_small_gap_factor(self):
        with pytest.raises(ValueError):
            GappedRmiIndex(gap_factor=0.5)

    @given(
        n=st.integers(1, 400),
        gap=st.floats(1.0, 6.0),
        seed=st.integers(0, 2**31),
    )
    @settings(max_examples=40, deadline=None)
    def test_structure_invariants(self, n, gap, seed):
        rel = small_relation(gen_dataset(DatasetSpec("unif", n, seed)))
        idx = build_grmi(rel, gap_factor=gap, rmi_fanout=8)
        assert int(idx.bitmap.sum()) == n
        assert np.all(idx.gkeys[:-1] <= idx.gkeys[1:])
        # real slots hold the sorted keys in order
        assert np.array_equal(idx.gkeys[idx.bitmap], np.sort(rel.keys))


class TestLookup:
    def test_every_inserted_key_found(self, relation_cache):
        rel = relation_cache("seq_h", 2000, 5)
        idx = build_grmi(rel, 4.0, 64)
        for k, p in zip(rel.keys[:500], rel.payloads[:500]):
            assert idx.lookup(k) == p
        payloads, src, found = idx.lookup_batch(rel.keys)
        assert found.all()
        srt = rel.sorted_by_key()
        assert np.array_equal(np.sort(payloads), np.sort(srt.payloads))

    def test_midpoints_absent(self):
        keys = np.arange(0, 2000, 2, dtype=np.uint64)  # evens only
        rel = small_relation(keys)
        idx = build_grmi(rel, 3.0, 32)
        probes = keys[:-1] + np.uint64(1)  # odd midpoints
        payloads, src, found = idx.lookup_batch(probes)
        assert not found.any()
        assert payloads.size == 0
        assert idx.lookup(5) is None

    def test_empty_index(self):
        idx = GappedRmiIndex().fit(small_relation([]))
        assert idx.lookup(42) is None
        assert idx.lookup_range(42).size == 0


class TestLookupRange:
    def test_no_duplicates_degenerates_to_single(self):
        rel = small_relation([3, 7, 11])
        idx = build_grmi(rel, 2.0, 2)
        assert idx.lookup_range(7).tolist() == [idx.lookup(7)]

    def test_triple_key(self):
        rel = Relation(
            np.array([5, 5, 5, 9], dtype=np.uint64),
            np.array([21, 22, 23, 24], dtype=np.uint64),
        )
        idx = build_grmi(rel, 2.0, 2)
        assert sorted(idx.lookup_range(5).tolist()) == [21, 22, 23]

    def test_absent_key_empty(self):
        rel = small_relation([1, 2, 3])
        idx = build_grmi(rel, 2.0, 2)
        assert idx.lookup_range(99).size == 0


class TestExponentialSearch:
    def test_key_at_start_single_probe(self):
        view = np.array([1, 3, 5, 7], dtype=np.uint64)
        stats = LookupStats()
        assert exponential_search(view, 2, 5, stats) == 2
        assert stats.search_steps == 1

    def test_two_slots_right_within_four_probes(self):
        view = np.arange(0, 64, 2, dtype=np.uint64)
        stats = LookupStats()
        slot = exponential_search(view, 10, view[12], stats)
        assert slot == 12
        assert stats.search_steps <= 4

    def test_absent_probe_bound(self):
        # worst case: key absent, window of size w
        w = 1024
        view = np.arange(0, 2 * w, 2, dtype=np.uint64)
        stats = LookupStats()
        assert exponential_search(view, 0, 2 * w - 1, stats) is None
        assert stats.search_steps <= 2 * math.ceil(math.log2(w)) + 2

    @given(
        n=st.integers(1, 300),
        start_frac=st.floats(0.0, 1.0),
        probe=st.integers(0, 700),
        seed=st.integers(0, 2**31),
    )
    @settings(max_examples=60, deadline=None)
    def test_finds_iff_present(self, n, start_frac, probe, seed):
        rng = np.random.default_rng(seed)
        view = np.sort(rng.integers(0, 700, n).astype(np.uint64))
        start = int(start_frac * (n - 1))
        slot = exponential_search(view, start, probe)
        if probe in view:
            assert slot is not None and view[slot] == probe
        else:
            assert slot is None


class TestBatchMatchesScalar:
    @given(seed=st.integers(0, 2**31), gap=st.sampled_from([1.0, 2.0, 4.0]))
    @settings(max_examples=25, deadline=None)
    def test_results_and_probe_counts(self, seed, gap):
        rng = np.random.default_rng(seed)
        keys = np.unique(rng.integers(0, 3000, 400).astype(np.uint64))
        rel = small_relation(keys, payload_seed=seed)
        idx = build_grmi(rel, gap, 16)
        probes = rng.integers(0, 3000, 200).astype(np.uint64)

        batch_stats = LookupStats()
        payloads, src, found = idx.lookup_batch(probes, batch_stats)

        scalar_probes = 0
        for i, k in enumerate(probes):
            st_one = LookupStats()
            slot0 = int(idx.predict_slots(np.asarray([k], dtype=np.uint64))[0])
            slot = exponential_search(idx.gkeys, slot0, k, st_one)
            scalar_probes += st_one.search_steps
            assert (slot is not None) == bool(found[i])
            if slot is not None:
                assert idx.lookup(k) is not None
        assert batch_stats.search_steps == scalar_probes
        assert batch_stats.predictions == probes.size
