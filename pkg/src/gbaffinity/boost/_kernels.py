"""Compiled inner loops for tree growth and prediction.

Every kernel is order-fixed: sums run over rows in ascending row order, so
results do not depend on how callers split features across threads.
"""

import numba
import numpy as np

_jit = numba.njit(nogil=True, cache=True)

# A gain below this fraction of the child terms is cancellation noise, e.g.
# splitting a node whose residuals are all equal.
GAIN_RTOL = 1e-11


@_jit
def build_histogram(codes, grad, rows, feats, n_bins):
    k = feats.shape[0]
    hist_g = np.zeros((k, n_bins), dtype=np.float64)
    hist_n = np.zeros((k, n_bins), dtype=np.int64)
    for r in rows:
        g = grad[r]
        for j in range(k):
            b = codes[r, feats[j]]
            hist_g[j, b] += g
            hist_n[j, b] += 1
    return hist_g, hist_n


@_jit
def best_split(hist_g, hist_n, feats, bins_per_feature, g_parent, n_parent, lam, min_child):
    """Scan cumulative histograms for the highest positive gain.

    Returns (slot, bin, gain); slot is -1 when no admissible split exists.
    Strict ``>`` keeps the lowest feature slot, then the lowest bin, on ties.
    Gains within ``GAIN_RTOL`` of the child terms count as zero.
    """
    best_slot = -1
    best_bin = -1
    best_gain = 0.0
    parent_term = g_parent * g_parent / (n_parent + lam)
    for j in range(feats.shape[0]):
        nb = bins_per_feature[feats[j]]
        g_left = 0.0
        n_left = 0
        for b in range(nb - 1):
            g_left += hist_g[j, b]
            n_left += hist_n[j, b]
            n_right = n_parent - n_left
            if n_left < min_child:
                continue
            if n_right < min_child:
                break
            g_right = g_parent - g_left
            children = g_left * g_left / (n_left + lam) + g_right * g_right / (n_right + lam)
            gain = children - parent_term
            if gain > best_gain and gain > GAIN_RTOL * children:
                best_gain = gain
                best_slot = j
                best_bin = b
    return best_slot, best_bin, best_gain


@_jit
def partition(codes, rows, feature, bin_index):
    left = np.empty(rows.shape[0], dtype=np.int64)
    right = np.empty(rows.shape[0], dtype=np.int64)
    nl = 0
    nr = 0
    for r in rows:
        if codes[r, feature] <= bin_index:
            left[nl] = r
            nl += 1
        else:
            right[nr] = r
            nr += 1
    return left[:nl], right[:nr]


@_jit
def row_sum(grad, rows):
    s = 0.0
    for r in rows:
        s += grad[r]
    return s


@_jit
def add_tree(X, feature, threshold, left, right, value, eps, pred):
    """``pred[i] += eps * tree(X[i])`` for every row, in place."""
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        pred[i] += eps * value[node]


@_jit
def leaf_index(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
