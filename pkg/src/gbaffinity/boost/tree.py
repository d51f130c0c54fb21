"""Leaf-wise regression tree fitted to gradient histograms."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .binning import BinMap
from .config import TrainConfig

# Below this many (rows x features) cells a node is histogrammed on one thread.
_PARALLEL_MIN_CELLS = 65536


class TooFewRowsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Tree:
    """Flat binary tree; node 0 is the root, ``feature == -1`` marks a leaf.

    Internal nodes send ``x[feature] <= threshold`` left. Leaf ``value`` is
    the unshrunk step ``G / (n + l2)``; ``count`` is the number of training
    rows that reached the node.
    """

    feature: np.ndarray
    bin: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    gain: np.ndarray
    depth: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def n_leaves(self) -> int:
        return int(self.is_leaf.sum())

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf node index reached by each row."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _kernels.leaf_index(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                nodes.append({"value": float(self.value[i]), "count": int(self.count[i])})
            else:
                nodes.append(
                    {
                        "feature": int(self.feature[i]),
                        "bin": int(self.bin[i]),
                        "threshold": float(self.threshold[i]),
                        "gain": float(self.gain[i]),
                        "count": int(self.count[i]),
                        "left": int(self.left[i]),
                        "right": int(self.right[i]),
                    }
                )
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        nodes = d["nodes"]
        if not nodes:
            raise ValueError("tree has no nodes")
        builder = _TreeBuilder()
        for node in nodes:
            if "feature" in node:
                builder.add(
                    feature=int(node["feature"]),
                    bin=int(node["bin"]),
                    threshold=float(node["threshold"]),
                    gain=float(node["gain"]),
                    count=int(node["count"]),
                    left=int(node["left"]),
                    right=int(node["right"]),
                )
            else:
                builder.add(value=float(node["value"]), count=int(node["count"]))
        tree = builder.build(compute_depth=True)
        tree.validate()
        return tree

    def validate(self) -> None:
        n = self.n_nodes
        internal = ~self.is_leaf
        for child in (self.left[internal], self.right[internal]):
            if np.any((child <= 0) | (child >= n)):
                raise ValueError("tree references a missing child node")
        if not np.isfinite(self.value[self.is_leaf]).all():
            raise ValueError("tree has non-finite leaf values")


class _TreeBuilder:
    def __init__(self):
        self.cols = {k: [] for k in ("feature", "bin", "threshold", "left", "right", "value", "count", "gain", "depth")}

    def add(self, feature=-1, bin=-1, threshold=0.0, left=-1, right=-1, value=0.0, count=0, gain=0.0, depth=0) -> int:
        for k, v in (
            ("feature", feature), ("bin", bin), ("threshold", threshold), ("left", left), ("right", right),
            ("value", value), ("count", count), ("gain", gain), ("depth", depth),
        ):
            self.cols[k].append(v)
        return len(self.cols["feature"]) - 1

    def build(self, compute_depth: bool = False) -> Tree:
        c = self.cols
        depth = np.array(c["depth"], dtype=np.int64)
        feature = np.array(c["feature"], dtype=np.int64)
        left = np.array(c["left"], dtype=np.int64)
        right = np.array(c["right"], dtype=np.int64)
        if compute_depth:
            depth = np.zeros(feature.size, dtype=np.int64)
            for i in range(feature.size):
                if feature[i] >= 0:
                    for ch in (left[i], right[i]):
                        if 0 < ch < feature.size:
                            depth[ch] = depth[i] + 1
        return Tree(
            feature=feature,
            bin=np.array(c["bin"], dtype=np.int64),
            threshold=np.array(c["threshold"], dtype=np.float64),
            left=left,
            right=right,
            value=np.array(c["value"], dtype=np.float64),
            count=np.array(c["count"], dtype=np.int64),
            gain=np.array(c["gain"], dtype=np.float64),
            depth=depth,
        )


@lru_cache(maxsize=4)
def _executor(threads: int) -> ThreadPoolExecutor:
    return ThreadPoolExecutor(threads, thread_name_prefix="gbaffinity-hist")


def _histogram(codes, grad, rows, feats, n_bins, threads):
    if threads <= 1 or feats.size < 2 or rows.size * feats.size < _PARALLEL_MIN_CELLS:
        return _kernels.build_histogram(codes, grad, rows, feats, n_bins)
    chunks = [c for c in np.array_split(feats, min(threads, feats.size)) if c.size]
    parts = list(
        _executor(threads).map(lambda c: _kernels.build_histogram(codes, grad, rows, c, n_bins), chunks)
    )
    return np.vstack([p[0] for p in parts]), np.vstack([p[1] for p in parts])


@dataclass(eq=False)
class _Leaf:
    node: int
    rows: np.ndarray
    g_sum: float
    depth: int
    feature: int = -1
    bin: int = -1
    gain: float = 0.0
    hist: tuple | None = None


def fit_tree(
    codes: np.ndarray,
    gradients: np.ndarray,
    cfg: TrainConfig,
    bin_map: BinMap,
    rows: np.ndarray | None = None,
    features: np.ndarray | None = None,
    threads: int = 1,
) -> Tree:
    """Grow one tree best-first on binned features.

    ``gradients`` are the regression targets of this round (negative loss
    gradients). ``rows``/``features`` restrict the tree to a bagged subset
    of rows and a sampled subset of columns.

    Split gain is ``G_L^2/(n_L+l2) + G_R^2/(n_R+l2) - G^2/(n+l2)`` and a
    leaf predicts ``G/(n+l2)``. The squared loss has unit hessian, which is
    why counts stand in for hessian sums here.
    """
    codes = np.ascontiguousarray(codes, dtype=np.uint8)
    grad = np.ascontiguousarray(gradients, dtype=np.float64)
    n_total, n_feat = codes.shape
    if grad.shape != (n_total,):
        raise ValueError("gradients must have one entry per row")
    rows = np.arange(n_total, dtype=np.int64) if rows is None else np.sort(np.asarray(rows, dtype=np.int64))
    feats = (
        np.arange(n_feat, dtype=np.int64) if features is None else np.sort(np.asarray(features, dtype=np.int64))
    )
    lam = float(cfg.l2_leaf_reg)
    min_child = int(cfg.min_child_samples)
    max_depth = cfg.max_depth
    bins_per_feature = bin_map.bins_per_feature
    n_bins = int(bins_per_feature.max()) if bins_per_feature.size else 1

    builder = _TreeBuilder()

    def splittable(n, depth):
        return (max_depth is None or depth < max_depth) and n >= 2 * min_child and feats.size > 0

    def new_leaf(leaf_rows, depth, hist=None):
        g = _kernels.row_sum(grad, leaf_rows)
        n = leaf_rows.size
        node = builder.add(value=g / (n + lam) if n + lam > 0 else 0.0, count=n, depth=depth)
        leaf = _Leaf(node, leaf_rows, g, depth)
        if splittable(n, depth):
            if hist is None:
                hist = _histogram(codes, grad, leaf_rows, feats, n_bins, threads)
            slot, b, gain = _kernels.best_split(
                hist[0], hist[1], feats, bins_per_feature, g, n, lam, min_child
            )
            if slot >= 0:
                leaf.feature, leaf.bin, leaf.gain = int(feats[slot]), int(b), float(gain)
                leaf.hist = hist  # kept only while the leaf may still be split
        return leaf

    def child_histograms(parent, left_rows, right_rows):
        # Histogram the smaller child; the larger one is parent minus smaller.
        depth = parent.depth + 1
        need_left = splittable(left_rows.size, depth)
        need_right = splittable(right_rows.size, depth)
        if not (need_left or need_right):
            return None, None
        small_is_left = left_rows.size <= right_rows.size
        small = _histogram(codes, grad, left_rows if small_is_left else right_rows, feats, n_bins, threads)
        need_large = need_right if small_is_left else need_left
        large = (parent.hist[0] - small[0], parent.hist[1] - small[1]) if need_large else None
        return (small, large) if small_is_left else (large, small)

    if rows.size < 2 * min_child:
        warnings.warn(
            f"only {rows.size} active rows (< 2 * min_child_samples = {2 * min_child}); "
            "fitting a single-leaf tree",
            TooFewRowsWarning,
            stacklevel=2,
        )
    candidates = [new_leaf(rows, 0)]
    n_leaves = 1
    while n_leaves < cfg.max_leaves:
        best = None
        for leaf in candidates:
            if leaf.feature >= 0 and (best is None or leaf.gain > best.gain):
                best = leaf
        if best is None:
            break
        candidates.remove(best)
        left_rows, right_rows = _kernels.partition(codes, best.rows, best.feature, best.bin)
        left_hist, right_hist = child_histograms(best, left_rows, right_rows)
        best.hist = None
        left = new_leaf(left_rows, best.depth + 1, left_hist)
        right = new_leaf(right_rows, best.depth + 1, right_hist)
        c = builder.cols
        c["feature"][best.node] = best.feature
        c["bin"][best.node] = best.bin
        c["threshold"][best.node] = float(bin_map.thresholds[best.feature][best.bin])
        c["gain"][best.node] = best.gain
        c["left"][best.node] = left.node
        c["right"][best.node] = right.node
        c["value"][best.node] = 0.0
        candidates.extend((left, right))
        n_leaves += 1
    return builder.build()
