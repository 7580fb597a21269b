"""Synthetic key distributions, duplicate injection, relations, and key files.

Three generator families are supported: ``seq_h`` (sequential IDs with random
holes), ``unif`` (uniform draws over the dataset size), and ``lognorm``
(heavy right-skewed draws). All generators are pure functions of their spec,
return distinct keys, and shuffle their output.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .util import SENTINEL_KEY, as_key_array, mix64

KINDS = ("seq_h", "unif", "lognorm")

# Dedup-by-redraw gives up after this many redraws per requested key.
REDRAW_BUDGET_FACTOR = 100


class GenerationExhaustedError(RuntimeError):
    """Raised when dedup-by-redraw exceeds its draw budget."""


class CorruptKeyFileError(ValueError):
    """Raised when a key file's header disagrees with its contents."""


@dataclass(frozen=True)
class DatasetSpec:
    """Parameters of one synthetic key dataset."""

    kind: str
    n: int
    seed: int
    hole_frac: float = 0.10
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0.0 <= self.hole_frac < 1.0:
            raise ValueError("hole_frac must be in [0, 1)")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be > 0")

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "seed": self.seed,
            "hole_frac": self.hole_frac,
            "mu": self.mu,
            "sigma": self.sigma,
        }


class Relation:
    """Columnar key/payload store. Immutable once constructed."""

    __slots__ = ("keys", "payloads")

    def __init__(self, keys, payloads):
        keys = as_key_array(keys)
        payloads = np.array(payloads, dtype=np.uint64, copy=True)
        if keys.shape != payloads.shape:
            raise ValueError("keys and payloads must have equal length")
        keys = np.array(keys, copy=True)
        keys.setflags(write=False)
        payloads.setflags(write=False)
        self.keys = keys
        self.payloads = payloads

    def __len__(self) -> int:
        return int(self.keys.size)

    def sorted_by_key(self) -> "Relation":
        order = np.argsort(self.keys, kind="stable")
        return Relation(self.keys[order], self.payloads[order])

    def __repr__(self) -> str:
        return f"Relation(n={len(self)})"


def _collect_distinct(n: int, draw, budget: int) -> np.ndarray:
    """First ``n`` distinct values of the redraw stream produced by ``draw``.

    Redrawing a duplicate position until it lands on an unseen value is
    distributionally the same as keeping the first-seen distinct values of a
    single iid stream, which vectorizes; the caller shuffles afterwards.
    Chunk sizes adapt to the observed acceptance rate so near-saturated
    supports do not degenerate into tiny rounds.
    """
    have = np.unique(draw(n))
    spent = 0
    rate = max(have.size / n, 1e-4)
    while have.size < n:
        deficit = n - have.size
        chunk = int(min(max(deficit / rate * 1.25, 4096), max(budget - spent, 0)))
        if chunk == 0:
            raise GenerationExhaustedError(
                f"could not draw {n} distinct keys within {budget} redraws"
            )
        fresh = draw(chunk)
        spent += chunk
        pos = np.searchsorted(have, fresh)
        seen = np.zeros(fresh.size, dtype=np.bool_)
        valid = pos < have.size
        seen[valid] = have[pos[valid]] == fresh[valid]
        novel = fresh[~seen]
        # distinct within the chunk, first-seen order, capped at the deficit
        _, first = np.unique(novel, return_index=True)
        rate = max(first.size / chunk, 1e-4)
        novel = novel[np.sort(first)][:deficit]
        if novel.size:
            have = np.sort(np.concatenate([have, novel]))
    return have


def gen_dataset(spec: DatasetSpec) -> np.ndarray:
    """Generate the distinct, shuffled key vector described by ``spec``."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    budget = REDRAW_BUDGET_FACTOR * n

    if spec.kind == "seq_h":
        universe = math.ceil(n / (1.0 - spec.hole_frac))
        holes = rng.choice(universe, size=universe - n, replace=False)
        keys = np.setdiff1d(
            np.arange(1, universe + 1, dtype=np.uint64),
            holes.astype(np.uint64) + np.uint64(1),
        )[:n]
    elif spec.kind == "unif":
        def draw(k):
            return np.rint(rng.random(k) * n).astype(np.uint64)

        keys = _collect_distinct(n, draw, budget)
    else:  # lognorm
        # scale by the dataset size; the integer support then comfortably
        # holds n distinct keys under dedup-by-redraw
        scale = float(n)

        def draw(k):
            v = rng.lognormal(spec.mu, spec.sigma, k) * scale
            return np.rint(np.minimum(v, 2.0**63)).astype(np.uint64)

        keys = _collect_distinct(n, draw, budget)

    return rng.permutation(keys)


def inject_duplicates(keys, frac: float, seed: int) -> np.ndarray:
    """Overwrite round(frac*n) positions with values copied from survivors.

    Length is preserved; the distinct-key count drops to n - round(frac*n).
    """
    if not 0.0 <= frac <= 1.0:
        raise ValueError("frac must be in [0, 1]")
    keys = as_key_array(keys)
    n = keys.size
    out = keys.copy()
    k = int(round(frac * n))
    if k == 0 or n == 0:
        return out
    k = min(k, n - 1)  # at least one survivor must remain as a copy source
    rng = np.random.default_rng(seed)
    replaced = rng.choice(n, size=k, replace=False)
    survivors = np.setdiff1d(np.arange(n), replaced)
    sources = rng.choice(survivors, size=k, replace=True)
    out[replaced] = out[sources]
    return out


def make_relation(keys, seed: int) -> Relation:
    """Attach deterministic nonzero 8-byte payloads to ``keys``.

    Payload i is a counter-based PRF of (seed, i); the low bit is forced so
    payloads are never 0 and "missing" stays distinguishable.
    """
    keys = as_key_array(keys)
    base = mix64(np.uint64(seed))
    with np.errstate(over="ignore"):
        positions = np.arange(keys.size, dtype=np.uint64) + base
    payloads = mix64(positions) | np.uint64(1)
    return Relation(keys, payloads)


def write_keys_file(path, keys) -> None:
    """Write keys as an 8-byte LE count header plus LE uint64 keys."""
    keys = np.ascontiguousarray(np.asarray(keys, dtype=np.uint64))
    header = np.array([keys.size], dtype="<u8")
    with open(path, "wb") as fh:
        header.tofile(fh)
        keys.astype("<u8").tofile(fh)


def load_keys_file(path) -> np.ndarray:
    """Load a key file written by :func:`write_keys_file`, bit-exactly."""
    size = os.path.getsize(path)
    if size < 8:
        raise CorruptKeyFileError(f"{path}: missing count header")
    with open(path, "rb") as fh:
        count = int(np.fromfile(fh, dtype="<u8", count=1)[0])
        if size != 8 + 8 * count:
            raise CorruptKeyFileError(
                f"{path}: header says {count} keys but file holds {(size - 8) // 8}"
            )
        keys = np.fromfile(fh, dtype="<u8", count=count)
    return keys.astype(np.uint64)
