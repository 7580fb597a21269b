"""Contextual multi-armed bandit that picks a join algorithm per query.

Each arm keeps a conjugate Bayesian linear-regression posterior over query
features; Thompson sampling draws one weight vector per arm and plays the
arm with the highest sampled score. Reward is -ln(latency), so minimizing
latency is maximizing reward. Selections and updates serialize through one
owner; featurization is pure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

ARMS = (
    "buffered-grmi-inlj",
    "grmi-inlj",
    "rmi-inlj",
    "hash-inlj",
    "spline-hash-inlj",
    "lsj",
    "smj",
    "npj",
    "radix-join",
)

INDEX_KINDS = ("none", "grmi", "rmi", "chain_hash", "spline_hash")
DISTRIBUTIONS = ("seq_h", "unif", "lognorm", "unknown")

# [log2|R|, log2|S|, log2(|S|/|R|), indexed, index one-hot, distribution
#  one-hot, duplicate_frac, presorted, bias]
FEATURE_DIM = 3 + 1 + len(INDEX_KINDS) + len(DISTRIBUTIONS) + 1 + 1 + 1


@dataclass(frozen=True)
class QueryMeta:
    r_size: int
    s_size: int
    indexed_r: bool = False
    index_kind: str = "none"
    distribution: str = "unknown"
    duplicate_frac: float = 0.0
    presorted: bool = False

    def __post_init__(self):
        if self.r_size < 0 or self.s_size < 0:
            raise ValueError("relation sizes must be >= 0")
        if self.index_kind not in INDEX_KINDS:
            raise ValueError(f"unknown index kind {self.index_kind!r}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")


def _log2_or_zero(v: float) -> float:
    return math.log2(v) if v > 0 else 0.0


def featurize(meta: QueryMeta) -> np.ndarray:
    """Fixed-length feature encoding of a join query."""
    vec = np.zeros(FEATURE_DIM, dtype=np.float64)
    vec[0] = _log2_or_zero(meta.r_size)
    vec[1] = _log2_or_zero(meta.s_size)
    if meta.r_size > 0 and meta.s_size > 0:
        vec[2] = math.log2(meta.s_size / meta.r_size)
    vec[3] = 1.0 if meta.indexed_r else 0.0
    vec[4 + INDEX_KINDS.index(meta.index_kind)] = 1.0
    off = 4 + len(INDEX_KINDS)
    vec[off + DISTRIBUTIONS.index(meta.distribution)] = 1.0
    off += len(DISTRIBUTIONS)
    vec[off] = meta.duplicate_frac
    vec[off + 1] = 1.0 if meta.presorted else 0.0
    vec[off + 2] = 1.0
    return vec


@dataclass
class ExperienceRecord:
    features: np.ndarray
    arm: str
    latency_s: float


class BanditState:
    """Per-arm Gaussian posteriors plus the append-only experience log."""

    def __init__(
        self,
        arms: tuple[str, ...] = ARMS,
        dim: int = FEATURE_DIM,
        prior_precision: float = 1.0,
        noise_scale: float = 0.5,
    ):
        if prior_precision <= 0 or noise_scale <= 0:
            raise ValueError("prior_precision and noise_scale must be > 0")
        self.arms = tuple(arms)
        self.dim = dim
        self.noise_scale = noise_scale
        self.precision = {a: np.eye(dim) * prior_precision for a in self.arms}
        self.b = {a: np.zeros(dim) for a in self.arms}
        self.experience: list[ExperienceRecord] = []

    def posterior_mean(self, arm: str) -> np.ndarray:
        return np.linalg.solve(self.precision[arm], self.b[arm])


def select_arm(state: BanditState, features: np.ndarray, rng_seed: int) -> str:
    """Thompson sampling: highest posterior-sampled score wins.

    One weight vector is drawn per arm in fixed arm order, so the selection
    is a deterministic function of (state, features, rng_seed).
    """
    rng = np.random.default_rng(rng_seed)
    x = np.asarray(features, dtype=np.float64)
    best_arm = state.arms[0]
    best_score = -np.inf
    for arm in state.arms:
        chol = np.linalg.cholesky(state.precision[arm])
        mean = np.linalg.solve(state.precision[arm], state.b[arm])
        z = rng.standard_normal(state.dim)
        w = mean + state.noise_scale * np.linalg.solve(chol.T, z)
        score = float(w @ x)
        if score > best_score:
            best_score = score
            best_arm = arm
    return best_arm


def record_outcome(
    state: BanditState, features: np.ndarray, arm: str, latency_seconds: float
) -> BanditState:
    """Conjugate update of one arm from an observed latency.

    Rank-1 precision update Lambda += x x^T and b += reward * x with
    reward = -ln(latency). Other arms' posteriors are untouched.
    """
    if latency_seconds <= 0:
        raise ValueError("latency must be > 0")
    if arm not in state.precision:
        raise ValueError(f"unknown arm {arm!r}")
    x = np.asarray(features, dtype=np.float64)
    reward = -math.log(latency_seconds)
    state.precision[arm] += np.outer(x, x)
    state.b[arm] += reward * x
    state.experience.append(ExperienceRecord(x.copy(), arm, float(latency_seconds)))
    return state


def save_experience_log(records: list[ExperienceRecord], path) -> None:
    """Persist experience as JSON lines: {"features": [...], "arm": ..., "latency_s": ...}."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "features": [float(v) for v in rec.features],
                        "arm": rec.arm,
                        "latency_s": rec.latency_s,
                    }
                )
                + "\n"
            )


def load_experience_log(path) -> list[ExperienceRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            records.append(
                ExperienceRecord(
                    np.asarray(obj["features"], dtype=np.float64),
                    obj["arm"],
                    float(obj["latency_s"]),
                )
            )
    return records


def replay_experience(state: BanditState, records: list[ExperienceRecord]) -> BanditState:
    """Warm-start a state by replaying a logged training workload."""
    for rec in records:
        record_outcome(state, rec.features, rec.arm, rec.latency_s)
    return state
