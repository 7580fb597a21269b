"""Command-line harness: generate datasets, build indexes, run joins and
sweeps, and drive the bandit optimizer.

Every run prints one JSON object per line (see BenchReport); pass --out to
write the lines to a file instead. The default seed is 42, overridable with
the LEARNED_JOINS_SEED environment variable or --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .baselines import OracleTooLargeError, nlj_oracle
from .bench import ALGORITHMS, make_join_inputs, run_bench, run_join
from .data import DatasetSpec, gen_dataset, inject_duplicates, load_keys_file, make_relation, write_keys_file
from .gapped import GappedRmiIndex
from .learned_hash import SplineHashIndex
from .models import RecursiveModelIndex
from .optimizer import ARMS, BanditState, QueryMeta, featurize, record_outcome, save_experience_log, select_arm

KINDS = ("seq_h", "unif", "lognorm")


def _default_seed() -> int:
    env = os.environ.get("LEARNED_JOINS_SEED")
    return int(env) if env else 42


def _emit(lines, out_path):
    if out_path:
        with open(out_path, "a", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line + "\n")
    else:
        for line in lines:
            print(line)


def _add_dataset_args(p: argparse.ArgumentParser):
    p.add_argument("--dataset", choices=KINDS, default="seq_h")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dup-frac", type=float, default=0.0)
    p.add_argument("--hole-frac", type=float, default=0.10)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=1.0)


def _add_algo_opts(p: argparse.ArgumentParser, sweepable: bool = False):
    p.add_argument("--gap-factor", type=float, default=4.0)
    p.add_argument("--rmi-fanout", type=int, default=1000)
    p.add_argument("--fanout", type=int, default=10000)
    p.add_argument("--sample-rate", type=float, default=0.01)
    p.add_argument("--spline-error", type=int, default=32)
    p.add_argument("--buffer-cap", type=int, default=200)
    swwc_choices = ("on", "off", "both") if sweepable else ("on", "off")
    p.add_argument("--swwc", choices=swwc_choices, default="on")
    p.add_argument("--out", default=None)
    if sweepable:
        p.add_argument("--gap-factor-sweep", nargs="+", type=float, default=None)
        p.add_argument("--spline-error-sweep", nargs="+", type=int, default=None)
        p.add_argument("--fanout-sweep", nargs="+", type=int, default=None)


def _opts_from_args(args) -> dict:
    return {
        "gap_factor": args.gap_factor,
        "rmi_fanout": args.rmi_fanout,
        "fanout": args.fanout,
        "sample_rate": args.sample_rate,
        "spline_error": args.spline_error,
        "buffer_cap": args.buffer_cap,
        "swwc": args.swwc == "on",
        "seed": args.seed,
    }


def cmd_gen(args) -> int:
    spec = DatasetSpec(
        args.dataset, args.n, args.seed, hole_frac=args.hole_frac, mu=args.mu, sigma=args.sigma
    )
    keys = gen_dataset(spec)
    if args.dup_frac:
        keys = inject_duplicates(keys, args.dup_frac, args.seed + 101)
    write_keys_file(args.path, keys)
    print(f"wrote {keys.size} keys to {args.path}")
    return 0


def cmd_build_index(args) -> int:
    if args.keys:
        keys = load_keys_file(args.keys)
    else:
        keys = gen_dataset(DatasetSpec(args.dataset, args.n, args.seed, hole_frac=args.hole_frac))
    rel = make_relation(keys, args.seed + 303)
    t0 = time.perf_counter()
    if args.index == "grmi":
        index = GappedRmiIndex(args.gap_factor, args.rmi_fanout).fit(rel)
        detail = {"slots": index.slot_count}
    elif args.index == "rmi":
        model = RecursiveModelIndex(fanout=args.rmi_fanout).fit(np.sort(rel.keys))
        detail = {"leaves": model.fanout}
    else:  # spline-hash
        index = SplineHashIndex(args.spline_error, table_factor=args.table_factor).fit(rel)
        detail = {
            "table_len": index.table_len,
            "collision_fraction": index.collision_fraction(),
        }
    build_s = time.perf_counter() - t0
    print(json.dumps({"index": args.index, "n": int(keys.size), "build_s": build_s, **detail}))
    return 0


def _load_or_gen_inputs(args):
    if args.keys_r or args.keys_s:
        if not (args.keys_r and args.keys_s):
            raise SystemExit("--keys-r and --keys-s must be given together")
        r = make_relation(load_keys_file(args.keys_r), args.seed + 303)
        s = make_relation(load_keys_file(args.keys_s), args.seed + 404)
        echo = {"keys_r": args.keys_r, "keys_s": args.keys_s}
        return r, s, echo
    return make_join_inputs(
        args.dataset,
        args.n,
        args.seed,
        dup_frac=args.dup_frac,
        self_join=args.self_join,
        hole_frac=args.hole_frac,
        mu=args.mu,
        sigma=args.sigma,
    )


def cmd_join(args) -> int:
    r, s, echo = _load_or_gen_inputs(args)
    lines = []
    for rep in range(args.repeat):
        report = run_join(
            args.algo, r, s, args.workers, _opts_from_args(args), dataset_echo=echo, repetition=rep
        )
        lines.append(report.to_json())
    _emit(lines, args.out)
    return 0


def cmd_bench(args) -> int:
    sweeps = {}
    if args.gap_factor_sweep:
        sweeps["gap_factor"] = args.gap_factor_sweep
    if args.spline_error_sweep:
        sweeps["spline_error"] = args.spline_error_sweep
    if args.fanout_sweep:
        sweeps["fanout"] = args.fanout_sweep
    if args.swwc == "both":
        sweeps["swwc"] = [True, False]
    reports = run_bench(
        algorithms=args.algo,
        kinds=args.dataset,
        sizes=args.n,
        seed=args.seed,
        dup_fracs=args.dup_frac,
        workers_list=args.workers,
        repeat=args.repeat,
        self_join=args.self_join,
        opts=_opts_from_args(args),
        opt_sweeps=sweeps,
    )
    _emit((rep.to_json() for rep in reports), args.out)
    return 0


def cmd_oracle(args) -> int:
    r, s, echo = _load_or_gen_inputs(args)
    try:
        t0 = time.perf_counter()
        result = nlj_oracle(r, s)
        runtime = time.perf_counter() - t0
    except OracleTooLargeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"algorithm": "nlj-oracle", "dataset": echo, "runtime_s": runtime, "result_count": result.count}))
    return 0


def cmd_optimize(args) -> int:
    """Bandit loop over a synthetic workload of join queries."""
    rng = np.random.default_rng(args.seed)
    state = BanditState()
    sizes = [1 << b for b in range(10, 17)]
    lines = []
    for round_id in range(args.rounds):
        kind = KINDS[int(rng.integers(len(KINDS)))]
        n = int(sizes[int(rng.integers(len(sizes)))])
        dup = float(rng.choice([0.0, 0.25]))
        r, s, echo = make_join_inputs(kind, n, int(rng.integers(2**31)), dup_frac=dup)
        meta = QueryMeta(
            r_size=len(r), s_size=len(s), distribution=kind, duplicate_frac=dup
        )
        features = featurize(meta)
        arm = select_arm(state, features, rng_seed=args.seed * 100003 + round_id)
        report = run_join(arm, r, s, args.workers, {"seed": args.seed}, dataset_echo=echo)
        latency = max(report.runtime_s, 1e-9)
        record_outcome(state, features, arm, latency)
        lines.append(report.to_json())
    _emit(lines, args.out)
    if args.log:
        save_experience_log(state.experience, args.log)
        print(f"experience log written to {args.log}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="learned-joins", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a key file")
    _add_dataset_args(p)
    p.add_argument("path")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("build-index", help="build an index and report stats")
    _add_dataset_args(p)
    p.add_argument("--index", choices=("grmi", "rmi", "spline-hash"), default="grmi")
    p.add_argument("--keys", default=None, help="load keys from a key file")
    p.add_argument("--gap-factor", type=float, default=4.0)
    p.add_argument("--rmi-fanout", type=int, default=1000)
    p.add_argument("--spline-error", type=int, default=32)
    p.add_argument("--table-factor", type=float, default=4.0)
    p.set_defaults(fn=cmd_build_index)

    p = sub.add_parser("join", help="run one join algorithm")
    _add_dataset_args(p)
    _add_algo_opts(p)
    p.add_argument("--algo", choices=sorted(ALGORITHMS), required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--self-join", action="store_true")
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--keys-r", default=None)
    p.add_argument("--keys-s", default=None)
    p.set_defaults(fn=cmd_join)

    p = sub.add_parser("bench", help="sweep algorithms x datasets x workers x tuning knobs")
    _add_algo_opts(p, sweepable=True)
    p.add_argument("--algo", nargs="+", choices=sorted(ALGORITHMS), required=True)
    p.add_argument("--dataset", nargs="+", choices=KINDS, default=["seq_h"])
    p.add_argument("--n", nargs="+", type=int, default=[100_000])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dup-frac", nargs="+", type=float, default=[0.0])
    p.add_argument("--workers", nargs="+", type=int, default=[1])
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--self-join", action="store_true")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("oracle", help="run the brute-force oracle join")
    _add_dataset_args(p)
    p.add_argument("--self-join", action="store_true")
    p.add_argument("--keys-r", default=None)
    p.add_argument("--keys-s", default=None)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("optimize", help="bandit loop over a synthetic workload")
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--log", default=None, help="write the experience log here")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_optimize)

    return parser


def main(argv=None) -> int:
    import warnings

    warnings.filterwarnings("ignore", message=".*TBB.*")
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None:
        args.seed = _default_seed()
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
