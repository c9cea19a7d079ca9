"""Forests of weighted CART trees.

Random forests bootstrap each tree (m uniform draws with replacement, drawn
rows keeping their sample weights) and split best-of-sqrt(d); completely
random forests train every tree on the full sample set and split on a single
random feature. Tree i draws all of its randomness from an RNG stream spawned
as child i of the forest seed, so a fitted forest is independent of training
order and thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels
from .tree import DecisionTree, SplitPolicy, fit_tree, tree_predict_proba
from .validation import (DataError, as_feature_matrix, as_label_vector,
                         as_weight_vector, check_n_features)


class ForestKind(Enum):
    RANDOM = "random"
    COMPLETELY_RANDOM = "completely_random"


_POLICY_OF = {
    ForestKind.RANDOM: SplitPolicy.BEST_OF_SQRT_D,
    ForestKind.COMPLETELY_RANDOM: SplitPolicy.SINGLE_RANDOM_FEATURE,
}


@dataclass
class Forest:
    kind: ForestKind
    trees: list[DecisionTree]
    n_estimators: int
    seed: int
    n_classes: int
    n_features: int
    # global row ids this forest was fitted on (provenance only, not saved)
    train_row_ids: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.trees) != self.n_estimators:
            raise ValueError("tree count must equal n_estimators")


def _tree_seed(child_ss: np.random.SeedSequence) -> tuple[np.random.SeedSequence, int]:
    boot_ss, grow_ss = child_ss.spawn(2)
    return boot_ss, int(grow_ss.generate_state(1, np.uint64)[0])


def fit_forest(X, y, w, kind: ForestKind, n_estimators: int, seed: int,
               weighted_bootstrap: bool = False, n_threads: int = 1,
               n_classes: int | None = None,
               train_row_ids: np.ndarray | None = None) -> Forest:
    """Fit ``n_estimators`` trees of the given kind.

    ``weighted_bootstrap`` switches random-kind bootstrapping from uniform
    draws (weights carried through to the tree) to draws proportional to the
    sample weights (trees then fitted with uniform weights), the classical
    boosting-by-resampling variant. Off by default.
    """
    if n_estimators < 1:
        raise DataError("n_estimators must be >= 1")
    X = as_feature_matrix(X)
    y = as_label_vector(y, X.shape[0])
    w = as_weight_vector(w, X.shape[0])
    k = int(y.max()) + 1 if n_classes is None else int(n_classes)
    m = X.shape[0]

    children = np.random.SeedSequence(seed).spawn(n_estimators)
    bootstrap = kind is ForestKind.RANDOM

    def build(i: int) -> DecisionTree:
        boot_ss, grow_seed = _tree_seed(children[i])
        if bootstrap:
            boot_seed = boot_ss.generate_state(1, np.uint64)[0]
            if weighted_bootstrap:
                idx = _kernels.weighted_bootstrap_indices(np.cumsum(w), boot_seed)
                w_fit = np.ones(m, dtype=np.float64)
            else:
                idx = _kernels.bootstrap_indices(m, boot_seed)
                w_fit = w
        else:
            idx = np.arange(m, dtype=np.int64)
            w_fit = w
        return fit_tree(X, y, w_fit, _POLICY_OF[kind], grow_seed,
                        sample_idx=idx, n_classes=k)

    if n_threads > 1 and n_estimators > 1:
        trees = [build(0)]  # warms the JIT before the pool fans out
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            trees.extend(pool.map(build, range(1, n_estimators)))
    else:
        trees = [build(i) for i in range(n_estimators)]

    return Forest(kind=kind, trees=trees, n_estimators=n_estimators,
                  seed=int(seed), n_classes=k, n_features=X.shape[1],
                  train_row_ids=train_row_ids)


def forest_predict_proba(forest: Forest, X) -> np.ndarray:
    """Unweighted mean of the per-tree class distributions."""
    X = as_feature_matrix(X)
    check_n_features(X, forest.n_features)
    acc = np.zeros((X.shape[0], forest.n_classes), dtype=np.float64)
    for tree in forest.trees:
        acc += tree_predict_proba(tree, X)
    acc /= forest.n_estimators
    return acc


def per_tree_predict_proba(forest: Forest, X) -> np.ndarray:
    """Prediction trace: entry (i, t, k) is tree t's probability of class k
    for row i, with trees in training order."""
    X = as_feature_matrix(X)
    check_n_features(X, forest.n_features)
    out = np.empty((X.shape[0], forest.n_estimators, forest.n_classes),
                   dtype=np.float64)
    for t, tree in enumerate(forest.trees):
        out[:, t, :] = tree_predict_proba(tree, X)
    return out
