"""Linear search for the quasi-optimal number of estimators per forest kind.

One forest of the range's upper bound is fitted with uniform weights; the
per-tree prediction trace on a held-out set is prefix-averaged (a cumulative
cache) so every candidate count is scored with a single pass instead of
refitting. The first candidate attaining the maximum accuracy wins, so ties
prefer the cheaper model.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .forest import ForestKind, fit_forest, per_tree_predict_proba
from .validation import DataError, as_feature_matrix, as_label_vector

SMALL_DATASET_THRESHOLD = 2000


@dataclass(frozen=True)
class SearchRange:
    lo: int
    hi: int
    step: int

    def __post_init__(self):
        if self.lo < 1 or self.step < 1 or self.lo > self.hi:
            raise DataError(f"invalid search range ({self.lo}, {self.hi}, {self.step})")

    def candidates(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1, self.step, dtype=np.int64)


@dataclass
class SearchResult:
    best_n: int
    curve: list[tuple[int, float]]
    kind: ForestKind

    @property
    def best_accuracy(self) -> float:
        return dict(self.curve)[self.best_n]


def default_search_range(m: int) -> SearchRange:
    """(20, 600, 20) in general; (5, 200, 5) for small datasets (m < 2000)."""
    if m < SMALL_DATASET_THRESHOLD:
        return SearchRange(5, 200, 5)
    return SearchRange(20, 600, 20)


def search_n_estimators(X_train, y_train, X_val, y_val, kind: ForestKind,
                        search_range: SearchRange, seed: int,
                        n_threads: int = 1) -> SearchResult:
    """Score every candidate estimator count on the validation set.

    Cost is one forest fit of size ``search_range.hi`` plus one pass over the
    cached cumulative trace. Validation classes absent from the training set
    only trigger a warning; those rows can never be predicted correctly.
    """
    X_train = as_feature_matrix(X_train, "X_train")
    y_train = as_label_vector(y_train, X_train.shape[0], "y_train")
    X_val = as_feature_matrix(X_val, "X_val")
    y_val = as_label_vector(y_val, X_val.shape[0], "y_val")
    if X_val.shape[0] == 0:
        raise DataError("validation set is empty")

    missing = np.setdiff1d(np.unique(y_val), np.unique(y_train))
    if missing.size:
        warnings.warn(f"validation classes {missing.tolist()} absent from the "
                      "training set; proceeding", stacklevel=2)

    k = int(max(y_train.max(), y_val.max())) + 1
    w = np.full(X_train.shape[0], 1.0 / X_train.shape[0])
    forest = fit_forest(X_train, y_train, w, kind, int(search_range.hi), seed,
                        n_threads=n_threads, n_classes=k)

    trace = per_tree_predict_proba(forest, X_val)
    cumulative = np.cumsum(trace, axis=1)  # the cache: sums of the first t trees
    curve: list[tuple[int, float]] = []
    for j in search_range.candidates():
        pred = np.argmax(cumulative[:, j - 1, :], axis=1)
        curve.append((int(j), float(np.mean(pred == y_val))))

    accs = np.array([a for _, a in curve])
    best = int(curve[int(np.argmax(accs))][0])  # argmax takes the first maximum
    return SearchResult(best_n=best, curve=curve, kind=kind)
