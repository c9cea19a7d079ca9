import numpy as np
import pytest

from daforest.forest import (Forest, ForestKind, fit_forest,
                             forest_predict_proba, per_tree_predict_proba)
from daforest.tree import tree_predict_proba
from daforest.validation import DataError

from conftest import make_blobs
from test_tree import node_reach_sets, tree_bytes


def forest_bytes(f: Forest) -> bytes:
    return b"".join(tree_bytes(t) for t in f.trees)


def brute_force_deep_tree_accuracy(X, y):
    """Oracle: a plain recursive CART over ALL features grown to purity."""

    def grow(rows):
        labels = y[rows]
        if np.all(labels == labels[0]):
            return ("leaf", labels[0])
        best = None
        for f in range(X.shape[1]):
            vals = np.unique(X[rows, f])
            for thr in (vals[:-1] + vals[1:]) / 2.0:
                left = rows[X[rows, f] <= thr]
                right = rows[X[rows, f] > thr]
                gini = sum(len(part) * (1.0 - sum((np.mean(y[part] == c)) ** 2
                                                  for c in np.unique(y)))
                           for part in (left, right))
                if best is None or gini < best[0]:
                    best = (gini, f, thr, left, right)
        if best is None:
            return ("leaf", np.bincount(labels).argmax())
        return ("split", best[1], best[2], grow(best[3]), grow(best[4]))

    def predict(node, x):
        while node[0] == "split":
            node = node[3] if x[node[1]] <= node[2] else node[4]
        return node[1]

    root = grow(np.arange(X.shape[0]))
    return float(np.mean([predict(root, x) for x in X] == y))


class TestFitForest:
    def test_single_tree_cr_forest_equals_its_tree(self, blobs_3class):
        X, y = blobs_3class
        f = fit_forest(X, y, np.ones(len(y)), ForestKind.COMPLETELY_RANDOM, 1, seed=0)
        np.testing.assert_array_equal(forest_predict_proba(f, X),
                                      tree_predict_proba(f.trees[0], X))

    def test_one_class_data_one_hot(self):
        X = np.random.default_rng(0).normal(size=(30, 3))
        y = np.zeros(30, dtype=int)
        for kind in ForestKind:
            f = fit_forest(X, y, np.ones(30), kind, 5, seed=1, n_classes=2)
            proba = forest_predict_proba(f, X)
            np.testing.assert_array_equal(proba, np.tile([1.0, 0.0], (30, 1)))

    def test_blobs_training_accuracy_matches_oracle(self):
        X, y = make_blobs(100, [(-3.0, -3.0), (3.0, 3.0)], spread=1.0, seed=5)
        assert brute_force_deep_tree_accuracy(X, y) == 1.0
        f = fit_forest(X, y, np.ones(200), ForestKind.RANDOM, 50, seed=2)
        acc = np.mean(forest_predict_proba(f, X).argmax(axis=1) == y)
        assert acc == 1.0

    def test_invalid_n_estimators(self):
        with pytest.raises(DataError):
            fit_forest(np.ones((4, 1)), [0, 0, 1, 1], np.ones(4),
                       ForestKind.RANDOM, 0, seed=0)


class TestPredictions:
    def test_forest_proba_equals_trace_mean(self, blobs_3class):
        X, y = blobs_3class
        f = fit_forest(X, y, np.ones(len(y)), ForestKind.RANDOM, 9, seed=3)
        trace = per_tree_predict_proba(f, X)
        np.testing.assert_allclose(trace.mean(axis=1),
                                   forest_predict_proba(f, X), atol=1e-12)

    def test_trace_slices_are_distributions(self, blobs_3class):
        X, y = blobs_3class
        f = fit_forest(X, y, np.ones(len(y)), ForestKind.COMPLETELY_RANDOM, 7, seed=4)
        trace = per_tree_predict_proba(f, X)
        assert trace.shape == (len(y), 7, 3)
        np.testing.assert_allclose(trace.sum(axis=2), 1.0, atol=1e-12)

    def test_two_trees_averaging(self):
        # two single-leaf trees returning (1,0) and (0,1) average to (0.5, 0.5)
        from daforest.tree import fit_tree, SplitPolicy
        X = np.array([[0.0], [1.0]])
        t0 = fit_tree(X, np.array([0, 0]), np.ones(2),
                      SplitPolicy.SINGLE_RANDOM_FEATURE, seed=0, n_classes=2)
        t1 = fit_tree(X, np.array([1, 1]), np.ones(2),
                      SplitPolicy.SINGLE_RANDOM_FEATURE, seed=0, n_classes=2)
        f = Forest(kind=ForestKind.COMPLETELY_RANDOM, trees=[t0, t1],
                   n_estimators=2, seed=0, n_classes=2, n_features=1)
        proba = forest_predict_proba(f, np.array([[0.5]]))
        np.testing.assert_array_equal(proba, [[0.5, 0.5]])

    def test_dimension_mismatch(self, blobs_3class):
        X, y = blobs_3class
        f = fit_forest(X, y, np.ones(len(y)), ForestKind.RANDOM, 2, seed=1)
        with pytest.raises(DataError, match="dimension mismatch"):
            forest_predict_proba(f, np.ones((3, 99)))


class TestKindContract:
    def test_completely_random_trains_on_full_sample(self):
        # unique rows + no bootstrap -> every CR tree is pure on ALL rows
        rng = np.random.default_rng(6)
        X = rng.normal(size=(50, 4))
        y = rng.integers(0, 2, size=50)
        f = fit_forest(X, y, np.ones(50), ForestKind.COMPLETELY_RANDOM, 10, seed=7)
        for tree in f.trees:
            assert np.array_equal(tree_predict_proba(tree, X).argmax(axis=1), y)

    def test_random_kind_bootstraps(self):
        # random labels: out-of-bag rows are near-surely misclassified by
        # some tree, so not every tree can be pure on the full set
        rng = np.random.default_rng(8)
        X = rng.normal(size=(50, 4))
        y = rng.integers(0, 2, size=50)
        f = fit_forest(X, y, np.ones(50), ForestKind.RANDOM, 10, seed=9)
        per_tree_perfect = [np.array_equal(tree_predict_proba(t, X).argmax(axis=1), y)
                            for t in f.trees]
        assert not all(per_tree_perfect)

    def test_cr_thresholds_inside_node_ranges(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(40, 3))
        y = rng.integers(0, 2, size=40)
        f = fit_forest(X, y, np.ones(40), ForestKind.COMPLETELY_RANDOM, 5, seed=11)
        for tree in f.trees:
            reach = node_reach_sets(tree, X)  # exact: CR trees see all rows
            for node, rows in reach.items():
                if tree.feature[node] < 0:
                    continue
                col = X[rows, tree.feature[node]]
                assert col.min() < tree.threshold[node] < col.max()


class TestExternalCrossCheck:
    def test_accuracy_tracks_reference_random_forest(self):
        # independent oracle: a mature random-forest implementation on the
        # same split should land within a few points of ours
        from sklearn.ensemble import RandomForestClassifier
        X, y = make_blobs(150, [(-1.0, 0.0, 0.3), (1.0, 0.2, -0.3)],
                          spread=1.3, seed=17)
        Xt, yt, Xv, yv = X[:220], y[:220], X[220:], y[220:]
        ours = fit_forest(Xt, yt, np.ones(220), ForestKind.RANDOM, 60, seed=1)
        acc_ours = np.mean(forest_predict_proba(ours, Xv).argmax(axis=1) == yv)
        ref = RandomForestClassifier(n_estimators=60, random_state=1).fit(Xt, yt)
        acc_ref = ref.score(Xv, yv)
        assert abs(acc_ours - acc_ref) < 0.08, (acc_ours, acc_ref)


class TestDeterminism:
    def test_seed_reproducibility(self, blobs_3class):
        X, y = blobs_3class
        a = fit_forest(X, y, np.ones(len(y)), ForestKind.RANDOM, 8, seed=5)
        b = fit_forest(X, y, np.ones(len(y)), ForestKind.RANDOM, 8, seed=5)
        assert forest_bytes(a) == forest_bytes(b)

    def test_thread_count_invariance(self, blobs_3class):
        X, y = blobs_3class
        w = np.ones(len(y))
        for kind in ForestKind:
            seq = fit_forest(X, y, w, kind, 12, seed=6, n_threads=1)
            par = fit_forest(X, y, w, kind, 12, seed=6, n_threads=4)
            assert forest_bytes(seq) == forest_bytes(par)

    def test_weighted_bootstrap_flag(self, blobs_3class):
        X, y = blobs_3class
        w = np.random.default_rng(1).uniform(0.1, 2.0, size=len(y))
        a = fit_forest(X, y, w, ForestKind.RANDOM, 6, seed=7)
        b = fit_forest(X, y, w, ForestKind.RANDOM, 6, seed=7, weighted_bootstrap=True)
        b2 = fit_forest(X, y, w, ForestKind.RANDOM, 6, seed=7, weighted_bootstrap=True)
        assert forest_bytes(a) != forest_bytes(b)
        assert forest_bytes(b) == forest_bytes(b2)
