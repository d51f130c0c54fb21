"""Additive tree ensembles trained by functional gradient descent."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .binning import BinMap, build_bins
from .config import TrainConfig
from .tree import Tree, fit_tree

logger = logging.getLogger(__name__)

MODEL_VERSION = "gbaffinity-ensemble/1"


class ModelFormatError(ValueError):
    """Model file is empty, truncated or otherwise unreadable."""


class ModelVersionError(ModelFormatError):
    pass


class ColumnMismatchError(ValueError):
    pass


class SquaredError:
    """L(f, y) = (f - y)^2 / 2; gradient f - y, hessian 1."""

    name = "squared_error"

    @staticmethod
    def loss(labels, predictions) -> np.ndarray:
        d = np.asarray(predictions, dtype=np.float64) - np.asarray(labels, dtype=np.float64)
        return 0.5 * d * d

    @staticmethod
    def negative_gradient(labels, predictions) -> np.ndarray:
        return np.asarray(labels, dtype=np.float64) - np.asarray(predictions, dtype=np.float64)


def negative_gradient(labels, predictions, loss=SquaredError) -> np.ndarray:
    """Residuals ``y - f`` for the squared loss."""
    y = np.asarray(labels, dtype=np.float64)
    f = np.asarray(predictions, dtype=np.float64)
    if y.shape != f.shape:
        raise ValueError(f"length mismatch: {y.shape} labels vs {f.shape} predictions")
    if not (np.isfinite(y).all() and np.isfinite(f).all()):
        raise ValueError("labels and predictions must be finite")
    return loss.negative_gradient(y, f)


@dataclass
class Ensemble:
    base_score: float
    learning_rate: float
    trees: list[Tree]
    bin_map: BinMap
    feature_names: tuple[str, ...]
    version: str = MODEL_VERSION
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.feature_names = tuple(self.feature_names)
        if self.bin_map.n_features != len(self.feature_names):
            raise ValueError("bin map and feature names disagree on the number of features")

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _align(self, X, column_names: Optional[Sequence[str]]) -> np.ndarray:
        if hasattr(X, "rows") and column_names is None:
            column_names = X.column_names
            X = X.rows
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("predict expects a 2-D matrix")
        if column_names is not None:
            column_names = tuple(column_names)
            if column_names != self.feature_names:
                have, want = set(column_names), set(self.feature_names)
                if have != want or len(column_names) != len(self.feature_names):
                    raise ColumnMismatchError(
                        f"column mismatch: missing {sorted(want - have)[:10]}, "
                        f"unexpected {sorted(have - want)[:10]}"
                    )
                order = [column_names.index(c) for c in self.feature_names]
                X = np.ascontiguousarray(X[:, order])
        if X.shape[1] != len(self.feature_names):
            raise ColumnMismatchError(f"expected {len(self.feature_names)} columns, got {X.shape[1]}")
        if not np.isfinite(X).all():
            raise ValueError("input contains non-finite values")
        return X

    def predict(self, X, column_names: Optional[Sequence[str]] = None, n_trees: Optional[int] = None) -> np.ndarray:
        """``f0`` plus ``learning_rate * tree(x)`` accumulated tree by tree."""
        X = self._align(X, column_names)
        pred = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees[: self.n_trees if n_trees is None else n_trees]:
            _add_tree(X, tree, self.learning_rate, pred)
        return pred

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "base_score": float(self.base_score),
            "learning_rate": float(self.learning_rate),
            "feature_names": list(self.feature_names),
            "bins": {"thresholds": self.bin_map.to_list()},
            "trees": [t.to_dict() for t in self.trees],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Ensemble":
        if not isinstance(d, dict):
            raise ModelFormatError("model file does not contain a JSON object")
        version = d.get("version")
        if version != MODEL_VERSION:
            raise ModelVersionError(f"unsupported model version {version!r} (expected {MODEL_VERSION!r})")
        try:
            return cls(
                base_score=float(d["base_score"]),
                learning_rate=float(d["learning_rate"]),
                trees=[Tree.from_dict(t) for t in d["trees"]],
                bin_map=BinMap.from_list(d["bins"]["thresholds"]),
                feature_names=tuple(d["feature_names"]),
                version=version,
                metadata=dict(d.get("metadata", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"corrupt model: {exc!r}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), allow_nan=False)


def _add_tree(X: np.ndarray, tree: Tree, eps: float, pred: np.ndarray) -> None:
    _kernels.add_tree(X, tree.feature, tree.threshold, tree.left, tree.right, tree.value, eps, pred)


def predict(model: Ensemble, X, column_names: Optional[Sequence[str]] = None) -> np.ndarray:
    return model.predict(X, column_names)


def save_model(model: Ensemble, path: str | Path) -> None:
    Path(path).write_text(model.dumps(), encoding="utf-8")


def load_model(path: str | Path) -> Ensemble:
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        raise ModelFormatError(f"{path}: empty model file")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: corrupt model file ({exc.msg})") from None
    return Ensemble.from_dict(data)


def feature_importance(model: Ensemble) -> dict[str, float]:
    """Total split gain per feature, normalized to sum to 1."""
    per_feature: list[list[float]] = [[] for _ in model.feature_names]
    for tree in model.trees:
        for f, g in zip(tree.feature, tree.gain):
            if f >= 0:
                per_feature[f].append(float(g))
    totals = [math.fsum(g) for g in per_feature]
    grand = math.fsum(totals)
    if grand <= 0:
        return {name: 0.0 for name in model.feature_names}
    return {name: t / grand for name, t in zip(model.feature_names, totals)}


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    model: Ensemble
    log: list[dict]
    train_predictions: np.ndarray
    valid_predictions: Optional[np.ndarray] = None
    best_iteration: int = 0
    stopped_early: bool = False


def _rmse(y, p) -> float:
    d = y - p
    return math.sqrt(float(np.mean(d * d)))


def train(
    matrix,
    valid=None,
    cfg: TrainConfig | None = None,
    threads: int = 1,
    loss=SquaredError,
) -> TrainResult:
    """Fit an ensemble on a :class:`FeatureMatrix`.

    Starts from the mean label, then each round fits a tree to the current
    residuals (on a seeded row bag and column sample when configured) and
    adds ``learning_rate * tree`` to the running prediction. With a
    validation matrix and ``early_stopping_rounds``, training stops after
    that many rounds without a strictly lower validation RMSE and the model
    is truncated to the best round.
    """
    cfg = cfg or TrainConfig()
    X = np.ascontiguousarray(matrix.rows, dtype=np.float64)
    y = np.ascontiguousarray(matrix.labels, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty matrix")
    if not np.isfinite(y).all():
        raise ValueError("training labels must be finite")
    names = tuple(matrix.column_names)
    if valid is not None:
        if tuple(valid.column_names) != names:
            raise ColumnMismatchError("validation matrix columns differ from training columns")
        Xv = np.ascontiguousarray(valid.rows, dtype=np.float64)
        yv = np.ascontiguousarray(valid.labels, dtype=np.float64)
        if Xv.shape[0] == 0:
            valid = None

    bin_map = build_bins(X, cfg.max_bins)
    codes = bin_map.transform(X)
    n, n_feat = X.shape
    rng = np.random.default_rng(cfg.rng_seed)

    base = float(np.mean(y))
    pred = np.full(n, base)
    vpred = np.full(Xv.shape[0], base) if valid is not None else None
    trees: list[Tree] = []

    def log_row(it):
        row = {"iteration": it, "train_rmse": _rmse(y, pred)}
        if vpred is not None:
            row["valid_rmse"] = _rmse(yv, vpred)
        return row

    log = [log_row(0)]
    best_valid = log[0].get("valid_rmse", math.inf)
    best_iter = 0
    best_pred = pred.copy()
    best_vpred = None if vpred is None else vpred.copy()
    stopped = False

    use_bagging = cfg.bagging_freq > 0 and cfg.bagging_fraction < 1.0
    n_bag = math.ceil(cfg.bagging_fraction * n)
    n_sub = max(1, math.ceil(cfg.feature_fraction * n_feat))
    bag = None
    for t in range(cfg.n_trees):
        grad = loss.negative_gradient(y, pred)
        if use_bagging and t % cfg.bagging_freq == 0:
            bag = np.sort(rng.choice(n, size=n_bag, replace=False))
        feats = None
        if n_sub < n_feat:
            feats = np.sort(rng.choice(n_feat, size=n_sub, replace=False))
        tree = fit_tree(codes, grad, cfg, bin_map, rows=bag, features=feats, threads=threads)
        trees.append(tree)
        _add_tree(X, tree, cfg.learning_rate, pred)
        if vpred is not None:
            _add_tree(Xv, tree, cfg.learning_rate, vpred)
        entry = log_row(t + 1)
        log.append(entry)
        if vpred is not None:
            if entry["valid_rmse"] < best_valid:
                best_valid, best_iter = entry["valid_rmse"], t + 1
                if cfg.early_stopping_rounds:
                    best_pred, best_vpred = pred.copy(), vpred.copy()
            elif cfg.early_stopping_rounds and t + 1 - best_iter >= cfg.early_stopping_rounds:
                stopped = True
                logger.info("early stopping at iteration %d (best %d)", t + 1, best_iter)
                break

    if stopped:
        trees = trees[:best_iter]
        pred, vpred = best_pred, best_vpred
    else:
        best_iter = len(trees)

    model = Ensemble(
        base_score=base,
        learning_rate=cfg.learning_rate,
        trees=trees,
        bin_map=bin_map,
        feature_names=names,
        metadata={"train_config": cfg.to_dict(), "loss": loss.name},
    )
    return TrainResult(model, log, pred, vpred, best_iter, stopped)
