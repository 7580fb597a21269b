"""Benchmark harness: build join inputs, run any registered algorithm, and
emit machine-readable reports.

Throughput is (|R| + |S|) / runtime in tuples per second. For the indexed
nested-loop family the index is built before timing starts (indexes are
assumed to exist ahead of the join); sort- and hash-based joins are timed
end to end. Reports serialize as one JSON object per line.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from . import baselines
from .buffers import DEFAULT_BUFFER_CAP, _flush_schedule, buffered_probe, plan_buffers
from .data import DatasetSpec, Relation, gen_dataset, inject_duplicates, make_relation
from .gapped import GappedRmiIndex
from .learned_hash import SplineHashIndex
from .lsj import LsjConfig, lsj_join
from .models import RecursiveModelIndex
from .results import JoinResult, LookupStats, PhaseBreakdown
from .util import chunk_bounds, parallel_map

DEFAULT_OPTS = {
    "gap_factor": 4.0,
    "rmi_fanout": 1000,
    "buffer_cap": DEFAULT_BUFFER_CAP,
    "spline_error": 32,
    "radix_bits": 18,
    "table_factor": 4.0,
    "bucket_size": 4,
    "sample_rate": 0.01,
    "hash_sample_rate": 0.02,
    "fanout": 10000,
    "swwc": True,
    "passes": 2,
    "bits_per_pass": 6,
    "seed": 42,
}


@dataclass
class BenchReport:
    algorithm: str
    dataset: dict
    workers: int
    config: dict
    runtime_s: float
    throughput: float
    result_count: int
    breakdown: dict
    repetition: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "algorithm": self.algorithm,
                "dataset": self.dataset,
                "workers": self.workers,
                "config": self.config,
                "runtime_s": self.runtime_s,
                "throughput": self.throughput,
                "result_count": self.result_count,
                "repetition": self.repetition,
                "breakdown": self.breakdown,
            }
        )


def make_join_inputs(
    kind: str,
    n: int,
    seed: int,
    dup_frac: float = 0.0,
    self_join: bool = False,
    hole_frac: float = 0.10,
    mu: float = 0.0,
    sigma: float = 1.0,
) -> tuple[Relation, Relation, dict]:
    """Deterministic R and S relations for one benchmark configuration."""
    spec_r = DatasetSpec(kind, n, seed, hole_frac=hole_frac, mu=mu, sigma=sigma)
    keys_r = gen_dataset(spec_r)
    if dup_frac:
        keys_r = inject_duplicates(keys_r, dup_frac, seed + 101)
    if self_join:
        keys_s = keys_r.copy()
    else:
        spec_s = DatasetSpec(kind, n, seed ^ 0x9E3779B9, hole_frac=hole_frac, mu=mu, sigma=sigma)
        keys_s = gen_dataset(spec_s)
        if dup_frac:
            keys_s = inject_duplicates(keys_s, dup_frac, seed + 202)
    r = make_relation(keys_r, seed + 303)
    s = make_relation(keys_s, seed + 404)
    echo = {
        "kind": kind,
        "n": n,
        "seed": seed,
        "dup_frac": dup_frac,
        "self_join": self_join,
        "hole_frac": hole_frac,
        "mu": mu,
        "sigma": sigma,
    }
    return r, s, echo


def _probe_grmi_chunks(index, s: Relation, workers: int, br: PhaseBreakdown) -> JoinResult:
    bounds = chunk_bounds(len(s), workers)

    def one(w):
        lo, hi = int(bounds[w]), int(bounds[w + 1])
        keys = s.keys[lo:hi]
        stats = LookupStats()
        t0 = time.perf_counter()
        slots0 = index.predict_slots(keys)
        t1 = time.perf_counter()
        payloads, src, _ = index.search_from(slots0, keys, stats)
        t2 = time.perf_counter()
        return JoinResult(payloads, s.payloads[lo:hi][src]), stats, t1 - t0, t2 - t1

    parts = parallel_map(one, range(workers), workers)
    for _, stats, pred, srch in parts:
        br.lookup_stats.merge(stats)
        br.pred += pred
        br.srch += srch
    # locality counter over the canonical full probe stream, so reports are
    # comparable across worker counts
    if len(s):
        leaf = index.leaf_of(s.keys)
        br.lookup_stats.leaf_switches = int(np.count_nonzero(np.diff(leaf) != 0))
    return JoinResult.concatenate([p[0] for p in parts])


def _run_grmi_inlj(r, s, workers, opts):
    index = GappedRmiIndex(opts["gap_factor"], opts["rmi_fanout"]).fit(r)
    br = PhaseBreakdown()
    t0 = time.perf_counter()
    result = _probe_grmi_chunks(index, s, workers, br)
    runtime = time.perf_counter() - t0
    return result, br, runtime


def _run_buffered_grmi_inlj(r, s, workers, opts):
    index = GappedRmiIndex(opts["gap_factor"], opts["rmi_fanout"]).fit(r)
    plan = plan_buffers(
        n_models=opts["rmi_fanout"] + 1, fanout=opts["rmi_fanout"], cap=opts["buffer_cap"]
    )
    br = PhaseBreakdown()
    bounds = chunk_bounds(len(s), workers)
    t0 = time.perf_counter()

    def one(w):
        lo, hi = int(bounds[w]), int(bounds[w + 1])
        keys = s.keys[lo:hi]
        pays = s.payloads[lo:hi]
        collected = []

        def sink(tags, payloads):
            collected.append(JoinResult(payloads, pays[tags]))

        stats = buffered_probe(index, keys, plan, sink, collect="all")
        return JoinResult.concatenate(collected), stats

    parts = parallel_map(one, range(workers), workers)
    runtime = time.perf_counter() - t0
    for _, stats in parts:
        br.lookup_stats.merge(stats)
    # report the canonical single-buffer-set schedule's switch count, which
    # does not depend on how the stream was chunked across workers
    if len(s):
        schedule = _flush_schedule(index.leaf_of(s.keys), plan.cap)
        leaves = [leaf for leaf, _ in schedule]
        br.lookup_stats.leaf_switches = sum(
            1 for i in range(1, len(leaves)) if leaves[i] != leaves[i - 1]
        )
    br.join = runtime
    return JoinResult.concatenate([p[0] for p in parts]), br, runtime


def _run_rmi_inlj(r, s, workers, opts):
    srt = r.sorted_by_key()
    model = RecursiveModelIndex(fanout=opts["rmi_fanout"]).fit(srt.keys) if len(r) else None
    if model is None:
        return JoinResult(), PhaseBreakdown(), 0.0
    t0 = time.perf_counter()
    result, br = baselines.rmi_inlj(srt, model, s, workers)
    runtime = time.perf_counter() - t0
    return result, br, runtime


def _run_hash_inlj(r, s, workers, opts):
    result, br = baselines.hash_inlj(
        r, s, bucket_size=opts["bucket_size"], workers=workers
    )
    return result, br, br.join  # probe time only; the index pre-exists


def _run_spline_hash_inlj(r, s, workers, opts):
    if len(r) == 0:
        return JoinResult(), PhaseBreakdown(), 0.0
    index = SplineHashIndex(
        opts["spline_error"], opts["radix_bits"], opts["table_factor"]
    ).fit(r)
    br = PhaseBreakdown()
    bounds = chunk_bounds(len(s), workers)
    t0 = time.perf_counter()

    def one(w):
        lo, hi = int(bounds[w]), int(bounds[w + 1])
        payloads, src = index.probe_batch(s.keys[lo:hi])
        return JoinResult(payloads, s.payloads[lo:hi][src])

    result = JoinResult.concatenate(parallel_map(one, range(workers), workers))
    runtime = time.perf_counter() - t0
    br.pred = runtime  # hash probing is all prediction, no last-mile search
    br.lookup_stats.predictions = len(s)
    return result, br, runtime


def _run_lsj(r, s, workers, opts):
    config = LsjConfig(
        workers=workers,
        sample_rate=opts["sample_rate"],
        fanout=opts["fanout"],
        swwc=opts["swwc"],
        seed=opts["seed"],
    )
    t0 = time.perf_counter()
    result, br = lsj_join(r, s, config)
    return result, br, time.perf_counter() - t0


def _run_smj(r, s, workers, opts):
    t0 = time.perf_counter()
    result, br = baselines.smj_join(r, s, workers)
    return result, br, time.perf_counter() - t0


def _run_npj(r, s, workers, opts):
    t0 = time.perf_counter()
    result, br = baselines.npj_join(r, s, workers)
    return result, br, time.perf_counter() - t0


def _run_radix(r, s, workers, opts):
    t0 = time.perf_counter()
    result, br = baselines.radix_join(
        r, s, passes=opts["passes"], bits_per_pass=opts["bits_per_pass"], workers=workers
    )
    return result, br, time.perf_counter() - t0


def _run_sampled_hash(r, s, workers, opts):
    t0 = time.perf_counter()
    result, br = baselines.sampled_hash_join(
        r,
        s,
        sample_rate=opts["hash_sample_rate"],
        workers=workers,
        seed=opts["seed"],
        max_error=opts["spline_error"],
        radix_bits=opts["radix_bits"],
    )
    return result, br, time.perf_counter() - t0


def _run_oracle(r, s, workers, opts):
    t0 = time.perf_counter()
    result = baselines.nlj_oracle(r, s)
    return result, PhaseBreakdown(), time.perf_counter() - t0


ALGORITHMS = {
    "buffered-grmi-inlj": _run_buffered_grmi_inlj,
    "grmi-inlj": _run_grmi_inlj,
    "rmi-inlj": _run_rmi_inlj,
    "hash-inlj": _run_hash_inlj,
    "spline-hash-inlj": _run_spline_hash_inlj,
    "lsj": _run_lsj,
    "smj": _run_smj,
    "npj": _run_npj,
    "radix-join": _run_radix,
    "sampled-hash-join": _run_sampled_hash,
    "nlj-oracle": _run_oracle,
}


def run_join(
    algorithm: str,
    r: Relation,
    s: Relation,
    workers: int = 1,
    opts: dict | None = None,
    dataset_echo: dict | None = None,
    repetition: int = 0,
) -> BenchReport:
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    merged = dict(DEFAULT_OPTS)
    if opts:
        merged.update(opts)
    result, br, runtime = ALGORITHMS[algorithm](r, s, workers, merged)
    total = len(r) + len(s)
    return BenchReport(
        algorithm=algorithm,
        dataset=dataset_echo or {"n_r": len(r), "n_s": len(s)},
        workers=workers,
        config=merged,
        runtime_s=runtime,
        throughput=total / runtime if runtime > 0 else 0.0,
        result_count=result.count,
        breakdown=br.as_dict(),
        repetition=repetition,
    )


def run_bench(
    algorithms: list[str],
    kinds: list[str],
    sizes: list[int],
    seed: int,
    dup_fracs: list[float] = (0.0,),
    workers_list: list[int] = (1,),
    repeat: int = 1,
    self_join: bool = False,
    opts: dict | None = None,
    opt_sweeps: dict | None = None,
):
    """Yield one report per (algorithm, kind, n, dup_frac, workers, opt
    variant, rep).

    ``opt_sweeps`` maps option names (gap_factor, spline_error, swwc,
    fanout, ...) to value lists; their cartesian product is swept on top of
    the dataset grid, covering the tuning axes of the parameter studies.
    """
    variants = [dict(opts or {})]
    for name, values in (opt_sweeps or {}).items():
        variants = [dict(v, **{name: val}) for v in variants for val in values]
    for kind in kinds:
        for n in sizes:
            for dup in dup_fracs:
                r, s, echo = make_join_inputs(kind, n, seed, dup, self_join)
                for algorithm in algorithms:
                    for w in workers_list:
                        for variant in variants:
                            for rep in range(repeat):
                                yield run_join(
                                    algorithm, r, s, w, variant, dataset_echo=echo, repetition=rep
                                )
