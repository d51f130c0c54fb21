"""Ordinary least squares, used as the linear-regression reference model."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

JITTER = 1e-8
_MAX_CONDITION = 1e12


class RankDeficientWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float

    def predict(self, X) -> np.ndarray:
        X = np.asarray(getattr(X, "rows", X), dtype=np.float64)
        return X @ self.weights + self.intercept

    def to_dict(self) -> dict:
        return {"weights": [float(w) for w in self.weights], "intercept": float(self.intercept)}


def _check_xy(X: np.ndarray, y: np.ndarray) -> None:
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if y.size < 2:
        raise ValueError("need at least two samples")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("inputs must be finite")


def ols_fit(X, y, ridge: float = 0.0) -> LinearModel:
    """Minimize ``sum (y - Xw - b)^2 + ridge * |w|^2`` on standardized columns.

    The penalty applies to standardized weights, so ``ridge`` is scale-free;
    the returned model is expressed in the original units. When ``ridge``
    is 0 and the normal equations are singular or badly conditioned, a
    ``JITTER`` ridge is added and a :class:`RankDeficientWarning` is issued.
    """
    X = np.asarray(getattr(X, "rows", X), dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_xy(X, y)
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    y_mean = float(y.mean())
    if X.shape[1] == 0:
        return LinearModel(np.zeros(0), y_mean)

    mu = X.mean(axis=0)
    scale = X.std(axis=0)
    # constant columns are absorbed by the intercept and keep weight 0
    keep = scale > 0
    w_full = np.zeros(X.shape[1])
    if not keep.any():
        return LinearModel(w_full, y_mean)
    mu, scale = mu[keep], scale[keep]
    Z = (X[:, keep] - mu) / scale
    A = Z.T @ Z
    b = Z.T @ (y - y_mean)
    if ridge == 0 and np.linalg.cond(A) > _MAX_CONDITION:
        warnings.warn(
            f"normal equations are rank-deficient; applying ridge jitter {JITTER:g}",
            RankDeficientWarning,
            stacklevel=2,
        )
        ridge = JITTER
    A[np.diag_indices_from(A)] += ridge
    w = np.linalg.solve(A, b) / scale
    w_full[keep] = w
    return LinearModel(w_full, y_mean - float(mu @ w))


def ols_fit_1d(p, y) -> tuple[float, float]:
    """Simple regression of ``y`` on ``p``; returns ``(slope, intercept)``."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1:
        raise ValueError("p and y must be 1-D and of equal length")
    if p.size < 2:
        raise ValueError("need at least two points")
    pc = p - p.mean()
    sxx = float(pc @ pc)
    if sxx == 0.0:
        raise ValueError("predictor has zero variance")
    slope = float(pc @ (y - y.mean())) / sxx
    return slope, float(y.mean()) - slope * float(p.mean())
