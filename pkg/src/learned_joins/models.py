"""CDF approximators: a two-level linear RMI, a RadixSpline, and the scaled
partition mapping both models share.

Both models follow the estimator convention: hyperparameters in the
constructor, ``fit`` on a sorted key array returning ``self``, then
``predict`` / ``predict_many``. Predictions are rank estimates with inclusive
search bounds that are guaranteed to contain every training key's true rank.
Predicted positions are nondecreasing in the key, so scaled predictions
yield relatively sorted partitions.
"""

from __future__ import annotations

import uuid
from typing import NamedTuple

import numpy as np

from .util import as_key_array, check_sorted


class PosPrediction(NamedTuple):
    pos: int
    lo: int
    hi: int


def _centered_lstsq(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope/intercept, slope clamped to >= 0 for monotonicity."""
    mx = float(x.mean())
    my = float(y.mean())
    dx = x - mx
    var = float(np.dot(dx, dx))
    slope = float(np.dot(dx, y - my)) / var if var > 0.0 else 0.0
    slope = max(slope, 0.0)
    return slope, my - slope * mx


class RecursiveModelIndex:
    """Two-level RMI: a linear root routing to ``fanout`` linear leaves.

    Leaves keep exact min/max residuals as error bounds and are clamped to
    their own key segment, which makes the full prediction curve globally
    nondecreasing even when a least-squares fit would locally dip.
    """

    def __init__(self, fanout: int = 1000):
        if fanout < 1:
            raise ValueError("fanout must be >= 1")
        self.fanout = fanout
        self.trained_len = 0
        self.tag = None

    def get_params(self) -> dict:
        return {"fanout": self.fanout}

    def fit(self, sorted_keys) -> "RecursiveModelIndex":
        keys = as_key_array(sorted_keys)
        if keys.size == 0:
            raise ValueError("cannot train on an empty key array")
        check_sorted(keys)
        n = keys.size
        m = self.fanout
        x = keys.astype(np.float64)
        ranks = np.searchsorted(keys, keys, side="left").astype(np.float64)

        self.root_slope, self.root_intercept = _centered_lstsq(x, ranks / n * m)
        leaf = self._route_float(x)

        starts = np.searchsorted(leaf, np.arange(m), side="left")
        ends = np.searchsorted(leaf, np.arange(m), side="right")
        counts = (ends - starts).astype(np.float64)
        nonempty = counts > 0

        sum_x = np.bincount(leaf, weights=x, minlength=m)
        sum_y = np.bincount(leaf, weights=ranks, minlength=m)
        mean_x = np.where(nonempty, sum_x / np.maximum(counts, 1), 0.0)
        mean_y = np.where(nonempty, sum_y / np.maximum(counts, 1), 0.0)
        cx = x - mean_x[leaf]
        cy = ranks - mean_y[leaf]
        var = np.bincount(leaf, weights=cx * cx, minlength=m)
        cov = np.bincount(leaf, weights=cx * cy, minlength=m)
        slope = np.where(var > 0.0, cov / np.where(var > 0.0, var, 1.0), 0.0)
        slope = np.maximum(slope, 0.0)
        intercept = mean_y - slope * mean_x

        # empty leaf: constant model at its segment start
        seg_start = np.minimum(starts, n - 1).astype(np.float64)
        slope = np.where(nonempty, slope, 0.0)
        intercept = np.where(nonempty, intercept, seg_start)

        clamp_lo = np.where(nonempty, starts, np.minimum(starts, n - 1))
        clamp_hi = np.where(nonempty, ends - 1, np.minimum(starts, n - 1))

        self.leaf_slope = slope
        self.leaf_intercept = intercept
        self.clamp_lo = clamp_lo.astype(np.int64)
        self.clamp_hi = clamp_hi.astype(np.int64)
        self.trained_len = int(n)

        pred = self._leaf_positions(x, leaf)
        resid = ranks.astype(np.int64) - pred
        err_lo = np.zeros(m, dtype=np.int64)
        err_hi = np.zeros(m, dtype=np.int64)
        np.minimum.at(err_lo, leaf, resid)
        np.maximum.at(err_hi, leaf, resid)
        self.err_lo = np.minimum(err_lo, 0)
        self.err_hi = np.maximum(err_hi, 0)
        self.tag = uuid.uuid4().hex
        return self

    def _route_float(self, x: np.ndarray) -> np.ndarray:
        raw = self.root_slope * x + self.root_intercept
        return np.clip(np.floor(raw), 0, self.fanout - 1).astype(np.int64)

    def route_many(self, keys) -> np.ndarray:
        """Leaf index each key is routed to by the root model."""
        x = np.asarray(keys, dtype=np.uint64).astype(np.float64)
        return self._route_float(np.atleast_1d(x))

    def _leaf_positions(self, x: np.ndarray, leaf: np.ndarray) -> np.ndarray:
        raw = self.leaf_slope[leaf] * x + self.leaf_intercept[leaf]
        pos = np.rint(raw).astype(np.int64)
        return np.clip(pos, self.clamp_lo[leaf], self.clamp_hi[leaf])

    def predict_many(self, keys) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized prediction: (pos, lo, hi) arrays, bounds inclusive."""
        self._check_fitted()
        x = np.atleast_1d(np.asarray(keys, dtype=np.uint64)).astype(np.float64)
        leaf = self._route_float(x)
        pos = self._leaf_positions(x, leaf)
        last = self.trained_len - 1
        lo = np.clip(pos + self.err_lo[leaf], 0, last)
        hi = np.clip(pos + self.err_hi[leaf], 0, last)
        return pos, lo, hi

    def predict(self, key) -> PosPrediction:
        pos, lo, hi = self.predict_many(np.asarray([key], dtype=np.uint64))
        return PosPrediction(int(pos[0]), int(lo[0]), int(hi[0]))

    def _check_fitted(self):
        if self.trained_len == 0:
            raise ValueError("model is not fitted")


def train_rmi(sorted_keys, fanout: int) -> RecursiveModelIndex:
    return RecursiveModelIndex(fanout=fanout).fit(sorted_keys)


class RadixSplineIndex:
    """Single-pass greedy spline over the CDF with a radix table on top.

    Spline points are chosen so that linear interpolation stays within
    ``max_error`` ranks of every training key; the radix table maps each
    ``radix_bits``-bit key prefix to the first spline point at or past it.
    """

    def __init__(self, max_error: int = 32, radix_bits: int = 18):
        if max_error < 1:
            raise ValueError("max_error must be >= 1")
        if not 1 <= radix_bits <= 30:
            raise ValueError("radix_bits must be in [1, 30]")
        self.max_error = max_error
        self.radix_bits = radix_bits
        self.trained_len = 0
        self.tag = None

    def get_params(self) -> dict:
        return {"max_error": self.max_error, "radix_bits": self.radix_bits}

    def fit(self, sorted_keys) -> "RadixSplineIndex":
        keys = as_key_array(sorted_keys)
        if keys.size == 0:
            raise ValueError("cannot train on an empty key array")
        check_sorted(keys)
        n = keys.size

        uk = np.unique(keys)
        ur = np.searchsorted(keys, uk, side="left").astype(np.int64)
        chosen = self._greedy_corridor(uk.astype(np.float64), ur, float(self.max_error))
        self.spline_keys = uk[chosen]
        self.spline_ranks = ur[chosen]
        self.trained_len = int(n)

        r = self.radix_bits
        max_bits = int(self.spline_keys[-1]).bit_length()
        self.shift = np.uint64(max(max_bits - r, 0))
        prefixes = (self.spline_keys >> self.shift).astype(np.int64)
        self.radix_table = np.searchsorted(
            prefixes, np.arange((1 << r) + 1, dtype=np.int64), side="left"
        ).astype(np.int64)
        self.tag = uuid.uuid4().hex
        return self

    @staticmethod
    def _greedy_corridor(x: np.ndarray, y: np.ndarray, err: float) -> np.ndarray:
        """Indices of the spline points chosen by corridor narrowing."""
        s = x.size
        if s <= 2:
            return np.arange(s)
        chosen = [0]
        base_x, base_y = x[0], float(y[0])
        upper = np.inf
        lower = -np.inf
        for i in range(1, s):
            dx = x[i] - base_x
            slope = (y[i] - base_y) / dx
            if slope > upper or slope < lower:
                chosen.append(i - 1)
                base_x, base_y = x[i - 1], float(y[i - 1])
                dx = x[i] - base_x
                upper = (y[i] + err - base_y) / dx
                lower = (y[i] - err - base_y) / dx
            else:
                upper = min(upper, (y[i] + err - base_y) / dx)
                lower = max(lower, (y[i] - err - base_y) / dx)
        if chosen[-1] != s - 1:
            chosen.append(s - 1)
        return np.asarray(chosen, dtype=np.int64)

    def predict_many(self, keys) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized prediction: (pos, lo, hi) arrays, bounds inclusive."""
        self._check_fitted()
        k = np.atleast_1d(np.asarray(keys, dtype=np.uint64))
        sk = self.spline_keys
        sr = self.spline_ranks.astype(np.float64)
        npts = sk.size

        prefix = np.minimum(
            (k >> self.shift).astype(np.int64), (1 << self.radix_bits) - 1
        )
        lo = self.radix_table[prefix]
        hi = self.radix_table[prefix + 1]
        j = _bounded_first_geq(sk, k, lo, hi)
        j = np.clip(j, 1, max(npts - 1, 1))

        if npts == 1:
            pos = np.full(k.size, int(self.spline_ranks[0]), dtype=np.int64)
        else:
            x0 = sk[j - 1].astype(np.float64)
            x1 = sk[j].astype(np.float64)
            kf = k.astype(np.float64)
            t = np.clip((kf - x0) / np.maximum(x1 - x0, 1.0), 0.0, 1.0)
            pos = np.rint(sr[j - 1] + t * (sr[j] - sr[j - 1])).astype(np.int64)
        last = self.trained_len - 1
        pos = np.clip(pos, 0, last)
        err = self.max_error
        return pos, np.clip(pos - err, 0, last), np.clip(pos + err, 0, last)

    def predict(self, key) -> PosPrediction:
        pos, lo, hi = self.predict_many(np.asarray([key], dtype=np.uint64))
        return PosPrediction(int(pos[0]), int(lo[0]), int(hi[0]))

    def _check_fitted(self):
        if self.trained_len == 0:
            raise ValueError("model is not fitted")


def train_radix_spline(sorted_keys, max_error: int, radix_bits: int) -> RadixSplineIndex:
    return RadixSplineIndex(max_error=max_error, radix_bits=radix_bits).fit(sorted_keys)


def _bounded_first_geq(arr: np.ndarray, keys: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Per-key binary search for the first arr index >= key inside [lo, hi).

    The slice may be empty or miss the key; the converged index still falls
    back to the nearest populated position, so radix-table gaps are safe.
    """
    lo = np.array(lo, dtype=np.int64)
    hi = np.array(hi, dtype=np.int64)
    # widen by one point on the left so interpolation can bracket
    lo = np.maximum(lo, 0)
    hi = np.minimum(np.maximum(hi, lo), arr.size)
    active = lo < hi
    while np.any(active):
        mid = (lo + hi) >> 1
        take = np.zeros_like(active)
        take[active] = arr[mid[active]] < keys[active]
        lo = np.where(take, mid + 1, lo)
        hi = np.where(active & ~take, mid, hi)
        active = lo < hi
    return lo


def partition_index(model, keys, num_partitions: int):
    """Bucket of each key under the model's CDF scaled to ``num_partitions``.

    Nondecreasing in the key for a fixed model, so a sorted stream maps to a
    nondecreasing bucket sequence.
    """
    if num_partitions < 1:
        raise ValueError("num_partitions must be >= 1")
    scalar = np.ndim(keys) == 0
    pos, _, _ = model.predict_many(keys)
    # floor(pos/len * P) in exact integer arithmetic; float would misplace
    # bucket boundaries
    bucket = pos * np.int64(num_partitions) // np.int64(model.trained_len)
    bucket = np.clip(bucket, 0, num_partitions - 1)
    return int(bucket[0]) if scalar else bucket
