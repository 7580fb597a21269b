import numpy as np
import pytest

from learned_joins import Relation, SplineHashIndex, build_spline_hash, make_relation


class TestBuild:
    def test_identity_keys_zero_collisions(self):
        rel = make_relation(np.arange(50_000, dtype=np.uint64), 2)
        idx = SplineHashIndex(max_error=32, table_factor=1.0).fit(rel)
        assert idx.collision_fraction() == 0.0

    def test_seq_h_beats_birthday_paradox(self, relation_cache):
        rel = relation_cache("seq_h", 100_000, 42)
        idx = SplineHashIndex(max_error=32, table_factor=1.0).fit(rel)
        assert idx.collision_fraction() < 0.367

    def test_lognorm_collides_more_than_unif(self, relation_cache):
        fracs = {}
        for kind in ("unif", "lognorm"):
            idx = SplineHashIndex(max_error=32, table_factor=1.0).fit(
                relation_cache(kind, 50_000, 42)
            )
            fracs[kind] = idx.collision_fraction()
        assert fracs["lognorm"] > fracs["unif"]

    def test_default_table_factor_is_four(self):
        assert SplineHashIndex().table_factor == 4.0
        with pytest.raises(ValueError):
            SplineHashIndex(table_factor=0.5)


class TestProbe:
    def test_every_inserted_key_found(self, relation_cache):
        rel = relation_cache("seq_h", 5000, 9)
        idx = build_spline_hash(rel)
        payloads, src = idx.probe_batch(rel.keys)
        assert np.array_equal(np.sort(payloads), np.sort(rel.payloads))
        assert np.array_equal(src, np.arange(len(rel)))

    def test_absent_key_empty(self):
        rel = make_relation(np.array([2, 4, 6], dtype=np.uint64), 1)
        idx = build_spline_hash(rel)
        assert idx.probe(5).size == 0

    def test_duplicate_payloads_in_insertion_order(self):
        rel = Relation(
            np.array([7, 3, 7], dtype=np.uint64),
            np.array([100, 200, 300], dtype=np.uint64),
        )
        idx = build_spline_hash(rel, table_factor=1.0)
        assert idx.probe(7).tolist() == [100, 300]

    def test_empty_relation(self):
        idx = build_spline_hash(make_relation(np.array([1], dtype=np.uint64), 1))
        payloads, src = idx.probe_batch(np.empty(0, dtype=np.uint64))
        assert payloads.size == 0 and src.size == 0
