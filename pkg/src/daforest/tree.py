"""Weighted CART decision trees grown to purity.

Two split policies are supported: best-of-sqrt(d) (random-forest style,
midpoint thresholds, weighted Gini) and single-random-feature with a random
threshold (completely-random style). Both are implemented in
:mod:`daforest._kernels`; this module owns the public types and validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels
from .validation import (DataError, as_feature_matrix, as_label_vector,
                         as_weight_vector, check_n_features)


class SplitPolicy(Enum):
    BEST_OF_SQRT_D = "best_of_sqrt_d"
    SINGLE_RANDOM_FEATURE = "single_random_feature"


def n_split_candidates(d: int, policy: SplitPolicy) -> int:
    """Candidate features evaluated per node: max(1, round(sqrt(d))) or 1."""
    if policy is SplitPolicy.SINGLE_RANDOM_FEATURE:
        return 1
    return min(d, max(1, int(round(math.sqrt(d)))))


@dataclass
class DecisionTree:
    """A fitted tree stored as flat node arrays.

    ``feature[i] == -1`` marks a leaf. Leaf class distributions are stored
    compactly: ``leaf_class[i] >= 0`` means the one-hot distribution on that
    class; otherwise ``mixed_index[i]`` selects a row of ``mixed_dist``.
    ``weight_mass`` holds each leaf's total training weight.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_class: np.ndarray
    mixed_index: np.ndarray
    mixed_dist: np.ndarray
    weight_mass: np.ndarray
    n_classes: int
    n_features: int
    seed: int

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    @property
    def n_internal(self) -> int:
        return self.n_nodes - self.n_leaves

    def leaf_distribution(self, node: int) -> np.ndarray:
        if self.feature[node] >= 0:
            raise ValueError(f"node {node} is internal")
        if self.leaf_class[node] >= 0:
            out = np.zeros(self.n_classes, dtype=np.float64)
            out[self.leaf_class[node]] = 1.0
            return out
        return self.mixed_dist[self.mixed_index[node]].copy()

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf node id reached by every row of X."""
        X = as_feature_matrix(X)
        check_n_features(X, self.n_features)
        return _kernels.apply_tree(self.feature, self.threshold, self.left,
                                   self.right, X)


def _compress(n_nodes, feature, threshold, left, right, mass, dist, n_classes,
              n_features, seed) -> DecisionTree:
    leaf_class = np.full(n_nodes, -1, dtype=np.int32)
    mixed_index = np.full(n_nodes, -1, dtype=np.int32)
    mixed_rows = []
    leaves = np.flatnonzero(feature < 0)
    for node in leaves:
        row = dist[node]
        top = int(np.argmax(row))
        if row[top] == 1.0:
            leaf_class[node] = top
        else:
            mixed_index[node] = len(mixed_rows)
            mixed_rows.append(row.copy())
    mixed = (np.asarray(mixed_rows, dtype=np.float64) if mixed_rows
             else np.zeros((0, n_classes), dtype=np.float64))
    return DecisionTree(
        feature=np.ascontiguousarray(feature, dtype=np.int32),
        threshold=np.ascontiguousarray(threshold, dtype=np.float64),
        left=np.ascontiguousarray(left, dtype=np.int32),
        right=np.ascontiguousarray(right, dtype=np.int32),
        leaf_class=leaf_class,
        mixed_index=mixed_index,
        mixed_dist=mixed,
        weight_mass=np.ascontiguousarray(mass, dtype=np.float64),
        n_classes=n_classes,
        n_features=n_features,
        seed=int(seed),
    )


def fit_tree(X, y, w, policy: SplitPolicy, seed: int,
             sample_idx: np.ndarray | None = None,
             n_classes: int | None = None) -> DecisionTree:
    """Grow one weighted CART tree to purity.

    ``sample_idx`` restricts (or bootstraps, with duplicates) the rows used;
    defaults to all rows. ``n_classes`` widens the distribution vectors when
    the node sample may not contain every class.
    """
    X = as_feature_matrix(X)
    y = as_label_vector(y, X.shape[0])
    w = as_weight_vector(w, X.shape[0])
    if y.min() < 0:
        raise DataError("labels must be non-negative")
    k = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if sample_idx is None:
        sample_idx = np.arange(X.shape[0], dtype=np.int64)
    else:
        sample_idx = np.ascontiguousarray(sample_idx, dtype=np.int64)
        if sample_idx.size == 0:
            raise DataError("sample_idx is empty")
        if w[sample_idx].sum() <= 0.0:
            raise DataError("selected samples have zero total weight")

    kernel_seed = np.random.SeedSequence(seed).generate_state(1, np.uint64)[0]
    pol = (_kernels.POLICY_BEST_OF_SQRT_D if policy is SplitPolicy.BEST_OF_SQRT_D
           else _kernels.POLICY_SINGLE_RANDOM_FEATURE)
    cands = n_split_candidates(X.shape[1], policy)
    out = _kernels.grow_tree(X, y, w, k, pol, cands, kernel_seed, sample_idx)
    return _compress(*out, n_classes=k, n_features=X.shape[1], seed=seed)


def tree_predict_proba(tree: DecisionTree, X) -> np.ndarray:
    """Class distribution of the leaf reached by each row (or single vector)."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    leaves = tree.apply(X)
    n = leaves.shape[0]
    out = np.zeros((n, tree.n_classes), dtype=np.float64)
    cls = tree.leaf_class[leaves]
    pure = cls >= 0
    out[np.flatnonzero(pure), cls[pure]] = 1.0
    mixed = np.flatnonzero(~pure)
    if mixed.size:
        out[mixed] = tree.mixed_dist[tree.mixed_index[leaves[mixed]]]
    return out[0] if single else out
