"""Quantile binning of feature columns into uint8 codes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_BINS_LIMIT = 255


def _midpoint(a: float, b: float) -> float:
    # Must satisfy a <= m < b so that a bins left and b bins right.
    m = a + (b - a) / 2.0
    return m if a <= m < b else a


@dataclass(frozen=True)
class BinMap:
    """Per-feature ascending thresholds.

    A value ``v`` lands in bin ``#(thresholds < v)``, i.e. bins are closed on
    the upper side: ``v <= thresholds[b]`` means ``bin(v) <= b``.
    """

    thresholds: tuple[np.ndarray, ...]

    @property
    def n_features(self) -> int:
        return len(self.thresholds)

    @property
    def bins_per_feature(self) -> np.ndarray:
        return np.array([len(t) + 1 for t in self.thresholds], dtype=np.int64)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected a 2-D array with {self.n_features} columns, got {X.shape}")
        codes = np.empty(X.shape, dtype=np.uint8)
        for j, thr in enumerate(self.thresholds):
            codes[:, j] = np.searchsorted(thr, X[:, j], side="left")
        return codes

    def to_list(self) -> list[list[float]]:
        return [[float(v) for v in t] for t in self.thresholds]

    @classmethod
    def from_list(cls, data) -> "BinMap":
        thresholds = tuple(np.array(t, dtype=np.float64) for t in data)
        for t in thresholds:
            if t.size > 1 and not np.all(np.diff(t) > 0):
                raise ValueError("bin thresholds must be strictly increasing")
            if t.size > MAX_BINS_LIMIT - 1:
                raise ValueError("too many bin thresholds")
        return cls(thresholds)


def column_thresholds(col: np.ndarray, max_bins: int) -> np.ndarray:
    values, counts = np.unique(col, return_counts=True)
    if values.size <= 1:
        return np.empty(0)
    if values.size <= max_bins:
        cut = np.arange(values.size - 1)
    else:
        # cum[j] = number of samples <= values[j]; pick the distinct-value
        # boundaries whose left counts are closest to each equal-mass target.
        cum = np.cumsum(counts)[:-1]
        targets = np.arange(1, max_bins) * (col.size / max_bins)
        hi = np.clip(np.searchsorted(cum, targets), 0, cum.size - 1)
        lo = np.clip(hi - 1, 0, cum.size - 1)
        take_lo = np.abs(cum[lo] - targets) <= np.abs(cum[hi] - targets)
        cut = np.unique(np.where(take_lo, lo, hi))
    return np.array([_midpoint(values[j], values[j + 1]) for j in cut], dtype=np.float64)


def build_bins(X, max_bins: int = MAX_BINS_LIMIT) -> BinMap:
    """Equal-frequency thresholds per column; lossless when a column has
    at most ``max_bins`` distinct values."""
    rows = getattr(X, "rows", X)
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValueError("cannot build bins from an empty matrix")
    if not 2 <= max_bins <= MAX_BINS_LIMIT:
        raise ValueError(f"max_bins must be in [2, {MAX_BINS_LIMIT}], got {max_bins}")
    if not np.isfinite(rows).all():
        raise ValueError("cannot bin non-finite values")
    return BinMap(tuple(column_thresholds(rows[:, j], max_bins) for j in range(rows.shape[1])))
