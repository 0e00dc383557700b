"""Supervised entropy/MDL discretization (Fayyad & Irani)."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


def _entropy(counts):
    """Base-2 entropy of each row of a count matrix."""
    counts = np.atleast_2d(counts).astype(float)
    n = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n > 0, counts / n, 0.0)
        terms = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1)


def mdlp_cut_points(values, labels) -> np.ndarray:
    """Cut points for one continuous column.

    Recursively splits at the boundary point minimising class entropy and
    keeps a split only when its information gain passes the MDL test

        gain > (log2(N - 1) + log2(3**c - 2) - [c H(S) - c1 H(S1) - c2 H(S2)]) / N

    Returns the sorted cuts (midpoints between adjacent distinct values).
    """
    values = np.asarray(values, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if values.shape != labels.shape:
        raise ValueError("values and labels differ in length")
    if not np.isfinite(values).all():
        raise ValueError("values must be finite")
    if len(np.unique(values)) < 2:
        return np.empty(0)
    _, y = np.unique(labels, return_inverse=True)
    order = np.argsort(values, kind="stable")
    v, y = values[order], y[order]
    n_cls = y.max() + 1
    onehot = np.zeros((len(y), n_cls), dtype=np.int64)
    onehot[np.arange(len(y)), y] = 1
    cum = np.vstack([np.zeros(n_cls, np.int64), np.cumsum(onehot, axis=0)])

    # Start index of each run of equal values, and whether each run is pure.
    starts = np.flatnonzero(np.r_[True, v[1:] != v[:-1]])
    ends = np.r_[starts[1:], len(v)]
    run_counts = cum[ends] - cum[starts]
    pure_cls = np.where((run_counts > 0).sum(axis=1) == 1, run_counts.argmax(axis=1), -1)
    # Run boundary b (between run b-1 and run b) is a candidate unless both
    # runs are pure in the same class.
    is_boundary = ~((pure_cls[1:] >= 0) & (pure_cls[1:] == pure_cls[:-1]))
    boundary_idx = starts[1:][is_boundary]

    cuts = []
    stack = [(0, len(v))]
    while stack:
        lo, hi = stack.pop()
        cand = boundary_idx[(boundary_idx > lo) & (boundary_idx < hi)]
        if cand.size == 0:
            continue
        total = cum[hi] - cum[lo]
        left = cum[cand] - cum[lo]
        right = total - left
        n = hi - lo
        nl = (cand - lo).astype(float)
        wmean = (nl * _entropy(left) + (n - nl) * _entropy(right)) / n
        best = int(np.argmin(wmean))
        b = cand[best]
        h_s = _entropy(total)[0]
        h_l = _entropy(left[best])[0]
        h_r = _entropy(right[best])[0]
        gain = h_s - wmean[best]
        c = int((total > 0).sum())
        c1 = int((left[best] > 0).sum())
        c2 = int((right[best] > 0).sum())
        delta = np.log2(3.0 ** c - 2) - (c * h_s - c1 * h_l - c2 * h_r)
        if gain > (np.log2(n - 1) + delta) / n:
            cuts.append((v[b - 1] + v[b]) / 2.0)
            stack.append((lo, b))
            stack.append((b, hi))
    return np.array(sorted(cuts))


def apply_cuts(values, cuts) -> np.ndarray:
    """Bin index of each value; ``len(cuts) + 1`` bins."""
    return np.digitize(np.asarray(values, dtype=float), np.asarray(cuts, dtype=float))


class MDLPDiscretizer(TransformerMixin, BaseEstimator):
    """Discretize continuous features with class-supervised MDLP cuts.

    Attributes
    ----------
    cut_points_ : list of ndarray
        Sorted cut points per feature.
    n_bins_ : ndarray of int
        Number of bins per feature.
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        self.cut_points_ = [mdlp_cut_points(X[:, j], y) for j in range(X.shape[1])]
        self.n_bins_ = np.array([len(c) + 1 for c in self.cut_points_])
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "cut_points_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return np.column_stack(
            [apply_cuts(X[:, j], c) for j, c in enumerate(self.cut_points_)]
        ).astype(np.int64)
