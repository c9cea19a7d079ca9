"""The dense adaptive cascade forest classifier.

Each layer is an ensemble of forest "slots" (half random, half completely
random, interleaved CR, R, CR, R, ...). A slot is realized at training time
as k stratified-fold models whose out-of-fold class probabilities become both
the layer's probabilistic features and its contribution to the additive
SAMME.R score. Connectivity controls what later layers see:

* plain:  previous layer's feature block only
* sparse: raw features + previous layer's block
* dense:  raw features + the blocks of every preceding layer

Boosting reweights samples after every layer with the SAMME.R update scaled
by a learning rate; the final prediction is the argmax of the summed
per-layer scores. Early stopping truncates the cascade to the best prefix
once the training-side accuracy stops improving for ``patience`` layers.
"""

from __future__ import annotations

import os
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .data import Dataset, FoldAssignment, stratified_kfold
from .forest import Forest, ForestKind, fit_forest, forest_predict_proba
from .search import SearchRange, SearchResult, default_search_range, search_n_estimators
from .validation import (DataError, as_feature_matrix, as_label_vector,
                         check_n_features)

CONNECTIVITY_MODES = ("plain", "sparse", "dense")
SCORE_MODES = ("additive", "last_layer")

DEFAULT_N_ESTIMATORS = 500


def coding_matrix(y: np.ndarray, n_classes: int) -> np.ndarray:
    """SAMME.R target coding: 1 at the true class, -1/(K-1) elsewhere.

    Every row sums to zero.
    """
    if n_classes < 2:
        raise DataError("need at least 2 classes")
    out = np.full((y.shape[0], n_classes), -1.0 / (n_classes - 1), dtype=np.float64)
    out[np.arange(y.shape[0]), y] = 1.0
    return out


def samme_r_scores(P, prob_clip: float = 1e-9) -> np.ndarray:
    """Zero-sum class scores (K-1) * (log P_k - mean_k' log P_k').

    Probabilities are clipped to [prob_clip, 1] before the log, which removes
    the log-of-zero singularity. Accepts a single row or a matrix.
    """
    P = np.asarray(P, dtype=np.float64)
    single = P.ndim == 1
    if single:
        P = P.reshape(1, -1)
    k = P.shape[1]
    logp = np.log(np.clip(P, prob_clip, 1.0))
    h = (k - 1.0) * (logp - logp.mean(axis=1, keepdims=True))
    return h[0] if single else h


def update_weights(w: np.ndarray, y: np.ndarray, P: np.ndarray,
                   learning_rate: float, prob_clip: float = 1e-9) -> np.ndarray:
    """SAMME.R sample-weight update, renormalized to sum 1.

    w'_i = w_i * exp(-lr * (K-1)/K * sum_k code(y_i, k) * log clip(P_ik)).
    The learning rate scales the exponent only. If the total collapses to
    zero or goes non-finite the weights re-initialize to uniform with a
    warning.
    """
    P = np.asarray(P, dtype=np.float64)
    k = P.shape[1]
    logp = np.log(np.clip(P, prob_clip, 1.0))
    code = coding_matrix(y, k)
    exponent = -learning_rate * (k - 1.0) / k * np.einsum("ij,ij->i", code, logp)
    out = w * np.exp(exponent)
    total = out.sum()
    if not np.isfinite(total) or total <= 0.0:
        warnings.warn("sample weights underflowed; re-initializing to uniform",
                      stacklevel=2)
        return np.full_like(w, 1.0 / w.shape[0])
    return out / total


def layer_probability(oof_features: np.ndarray, n_slots: int, n_classes: int) -> np.ndarray:
    """Layer probability: mean of the per-slot K-wide probability blocks."""
    m, width = oof_features.shape
    if width != n_slots * n_classes:
        raise DataError(f"feature block width {width} != n_slots*K = {n_slots * n_classes}")
    return oof_features.reshape(m, n_slots, n_classes).mean(axis=1)


def build_layer_input(x0: np.ndarray, prior_blocks: list[np.ndarray], mode: str,
                      layer_index: int) -> np.ndarray:
    """Assemble the feature matrix seen by a layer.

    Layer 1 always sees the raw features. Deeper layers see, per mode, the
    previous block (plain), raw + previous block (sparse), or raw + all
    preceding blocks newest-first (dense).
    """
    if mode not in CONNECTIVITY_MODES:
        raise DataError(f"unknown connectivity mode {mode!r}")
    if layer_index < 1:
        raise DataError("layer_index is 1-based")
    if len(prior_blocks) != layer_index - 1:
        raise DataError(f"layer {layer_index} expects {layer_index - 1} prior "
                        f"blocks, got {len(prior_blocks)}")
    if layer_index == 1:
        return x0
    if mode == "plain":
        return prior_blocks[-1]
    if mode == "sparse":
        return np.hstack([x0, prior_blocks[-1]])
    return np.hstack([x0] + prior_blocks[::-1])


def expected_input_dim(d: int, n_classes: int, n_slots: int, mode: str,
                       layer_index: int) -> int:
    block = n_classes * n_slots
    if layer_index == 1:
        return d
    if mode == "plain":
        return block
    if mode == "sparse":
        return d + block
    return d + (layer_index - 1) * block


@dataclass
class SlotModel:
    """One forest position of a layer: k fold-models plus an optional
    full-data refit used for inference when ``refit_full`` is enabled."""

    kind: ForestKind
    fold_models: list[Forest]
    refit_model: Forest | None = None

    def predict_proba(self, X: np.ndarray, use_refit: bool = False) -> np.ndarray:
        if use_refit and self.refit_model is not None:
            return forest_predict_proba(self.refit_model, X)
        acc = np.zeros((X.shape[0], self.fold_models[0].n_classes), dtype=np.float64)
        for forest in self.fold_models:
            acc += forest_predict_proba(forest, X)
        return acc / len(self.fold_models)


@dataclass
class CascadeLayer:
    index: int
    slots: list[SlotModel]
    input_dim: int
    oof_features: np.ndarray | None = field(default=None, repr=False)
    layer_log_p: np.ndarray | None = field(default=None, repr=False)


def fit_layer_oof(aug_X: np.ndarray, y: np.ndarray, w: np.ndarray,
                  folds: FoldAssignment, slot_kinds: list[ForestKind],
                  n_per_kind: dict[ForestKind, int], n_classes: int,
                  layer_ss: np.random.SeedSequence, n_threads: int = 1,
                  weighted_bootstrap: bool = False,
                  refit_full: bool = False) -> tuple[list[SlotModel], np.ndarray]:
    """Fit every (slot, fold) forest and collect out-of-fold probabilities.

    Each fold model trains on the other k-1 folds with the global weight
    vector restricted to those rows and renormalized; rows of a fold are
    scored only by the model that excluded them.
    """
    m = aug_X.shape[0]
    k = folds.k
    oof = np.empty((m, len(slot_kinds) * n_classes), dtype=np.float64)
    slot_seeds = layer_ss.spawn(len(slot_kinds))
    slots: list[SlotModel] = []
    for s, kind in enumerate(slot_kinds):
        fold_seeds = slot_seeds[s].spawn(k + 1)
        fold_models: list[Forest] = []
        for f in range(k):
            train_rows = folds.rest_rows(f)
            val_rows = folds.fold_rows(f)
            w_fit = w[train_rows]
            w_fit = w_fit / w_fit.sum()
            seed = int(fold_seeds[f].generate_state(1, np.uint64)[0])
            forest = fit_forest(aug_X[train_rows], y[train_rows], w_fit, kind,
                                n_per_kind[kind], seed, n_threads=n_threads,
                                weighted_bootstrap=weighted_bootstrap,
                                n_classes=n_classes, train_row_ids=train_rows)
            oof[val_rows, s * n_classes:(s + 1) * n_classes] = \
                forest_predict_proba(forest, aug_X[val_rows])
            fold_models.append(forest)
        refit_model = None
        if refit_full:
            seed = int(fold_seeds[k].generate_state(1, np.uint64)[0])
            refit_model = fit_forest(aug_X, y, w / w.sum(), kind, n_per_kind[kind],
                                     seed, n_threads=n_threads,
                                     weighted_bootstrap=weighted_bootstrap,
                                     n_classes=n_classes,
                                     train_row_ids=np.arange(m))
        slots.append(SlotModel(kind=kind, fold_models=fold_models,
                               refit_model=refit_model))
    return slots, oof


def _slot_score_blocks(blocks: np.ndarray, n_slots: int, n_classes: int,
                       prob_clip: float) -> np.ndarray:
    out = np.empty_like(blocks)
    for s in range(n_slots):
        sl = slice(s * n_classes, (s + 1) * n_classes)
        out[:, sl] = samme_r_scores(blocks[:, sl], prob_clip)
    return out


def _stratified_holdout(y: np.ndarray, fraction: float,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Carve a stratified holdout for the estimator search. Unlike a
    train/test split, the holdout may miss rare classes entirely; the
    remainder always keeps at least one sample of every class."""
    hold_mask = np.zeros(y.shape[0], dtype=bool)
    for c in np.unique(y):
        rows = np.flatnonzero(y == c)
        n_hold = min(int(round(rows.size * fraction)), rows.size - 1)
        if n_hold <= 0:
            continue
        rng.shuffle(rows)
        hold_mask[rows[:n_hold]] = True
    if not hold_mask.any():
        # degenerate tiny input: hold out one row of the largest class
        counts = np.bincount(y)
        rows = np.flatnonzero(y == np.argmax(counts))
        hold_mask[rng.choice(rows)] = True
    return np.flatnonzero(~hold_mask), np.flatnonzero(hold_mask)


def resolve_threads(n_threads: int | None) -> int:
    if n_threads is not None:
        return max(1, int(n_threads))
    env = os.environ.get("DAF_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise DataError(f"DAF_THREADS must be an integer, got {env!r}") from None
    return 1


class DaForestClassifier(ClassifierMixin, BaseEstimator):
    """Dense adaptive cascade forest.

    Parameters
    ----------
    slots_per_kind : forests of each kind per layer (total slots = 2x this).
    connectivity : "plain", "sparse", or "dense".
    boosting : apply the SAMME.R sample-weight update between layers.
    learning_rate : scale on the boosting exponent.
    k_folds : stratified folds used for out-of-fold features.
    max_layers : cap on cascade depth.
    patience : layers without improvement before early stopping.
    n_estimators : trees per forest; an int applies to both kinds, a
        (random, completely_random) pair sets them separately. ``None``
        defers to the estimator search (or 500 when ``search=False``).
    search : run the linear estimator-count search before layer 1.
    search_range : explicit SearchRange; ``None`` picks (20, 600, 20), or
        (5, 200, 5) when the training set has fewer than 2000 rows.
    holdout_fraction : stratified share of the training data used only to
        score the search; the cascade then trains on the full split.
    score_features : forward per-slot score vectors instead of probabilities
        as the augmented features.
    score_mode : "additive" (argmax of summed scores) or "last_layer"
        (argmax of the final layer probability). ``None`` resolves to
        additive when boosting, last_layer otherwise.
    prob_clip : lower clip applied to probabilities before any log.
    weighted_bootstrap : bootstrap draws proportional to sample weights.
    refit_full : additionally fit each slot on the full data and use that
        model at inference instead of averaging the fold models.
    force_layers : grow exactly this many layers, ignoring early stopping.
    n_threads : worker threads for tree fitting; ``None`` reads DAF_THREADS
        (default 1). Results are identical for any thread count.
    random_state : master seed; every random decision derives from it.
    """

    def __init__(self, slots_per_kind=4, connectivity="dense", boosting=True,
                 learning_rate=0.3, k_folds=3, max_layers=100, patience=3,
                 n_estimators=None, search=True, search_range=None,
                 holdout_fraction=0.2, score_features=False, score_mode=None,
                 prob_clip=1e-9, weighted_bootstrap=False, refit_full=False,
                 force_layers=None, n_threads=None, random_state=0):
        self.slots_per_kind = slots_per_kind
        self.connectivity = connectivity
        self.boosting = boosting
        self.learning_rate = learning_rate
        self.k_folds = k_folds
        self.max_layers = max_layers
        self.patience = patience
        self.n_estimators = n_estimators
        self.search = search
        self.search_range = search_range
        self.holdout_fraction = holdout_fraction
        self.score_features = score_features
        self.score_mode = score_mode
        self.prob_clip = prob_clip
        self.weighted_bootstrap = weighted_bootstrap
        self.refit_full = refit_full
        self.force_layers = force_layers
        self.n_threads = n_threads
        self.random_state = random_state

    # -- configuration -----------------------------------------------------

    def _resolved_score_mode(self) -> str:
        if self.score_mode is None:
            return "additive" if self.boosting else "last_layer"
        if self.score_mode not in SCORE_MODES:
            raise DataError(f"score_mode must be one of {SCORE_MODES}")
        return self.score_mode

    def _slot_kinds(self) -> list[ForestKind]:
        kinds = []
        for _ in range(int(self.slots_per_kind)):
            kinds.append(ForestKind.COMPLETELY_RANDOM)
            kinds.append(ForestKind.RANDOM)
        return kinds

    def _resolve_n_per_kind(self, X, y, n_classes, ss_holdout, ss_search,
                            n_threads) -> dict[ForestKind, int]:
        if self.n_estimators is not None:
            if isinstance(self.n_estimators, (tuple, list)):
                nr, nc = self.n_estimators
            else:
                nr = nc = self.n_estimators
            return {ForestKind.RANDOM: int(nr), ForestKind.COMPLETELY_RANDOM: int(nc)}
        if not self.search:
            return {ForestKind.RANDOM: DEFAULT_N_ESTIMATORS,
                    ForestKind.COMPLETELY_RANDOM: DEFAULT_N_ESTIMATORS}
        rng = np.random.default_rng(ss_holdout)
        train_idx, hold_idx = _stratified_holdout(y, float(self.holdout_fraction), rng)
        srange = self.search_range or default_search_range(X.shape[0])
        self.search_results_ = {}
        out = {}
        for kind, kind_ss in zip((ForestKind.RANDOM, ForestKind.COMPLETELY_RANDOM),
                                 ss_search.spawn(2)):
            seed = int(kind_ss.generate_state(1, np.uint64)[0])
            result = search_n_estimators(X[train_idx], y[train_idx], X[hold_idx],
                                         y[hold_idx], kind, srange, seed,
                                         n_threads=n_threads)
            self.search_results_[kind.value] = result
            out[kind] = result.best_n
        return out

    # -- fitting -----------------------------------------------------------

    def fit(self, X, y):
        X = as_feature_matrix(X)
        y_in = np.asarray(y)
        if y_in.ndim != 1 or y_in.shape[0] != X.shape[0]:
            raise DataError("y must be a vector with one entry per row of X")
        self.classes_, y_enc = np.unique(y_in, return_inverse=True)
        y_enc = as_label_vector(y_enc, X.shape[0])
        n_classes = self.classes_.shape[0]
        if n_classes < 2:
            raise DataError("training data must contain at least 2 classes")
        if self.connectivity not in CONNECTIVITY_MODES:
            raise DataError(f"connectivity must be one of {CONNECTIVITY_MODES}")
        if not (0.0 < self.learning_rate):
            raise DataError("learning_rate must be positive")
        if self.k_folds < 2:
            raise DataError("k_folds must be >= 2")
        if self.patience < 1:
            raise DataError("patience must be >= 1")
        if not (0.0 < self.holdout_fraction < 1.0):
            raise DataError("holdout_fraction must lie strictly between 0 and 1")
        if self.max_layers < 1:
            raise DataError("max_layers must be >= 1")
        if self.force_layers is not None and int(self.force_layers) < 1:
            raise DataError("force_layers must be >= 1")
        if not isinstance(self.random_state, (int, np.integer)) or \
                not (0 <= int(self.random_state) < 2 ** 64):
            raise DataError("random_state must be an integer in [0, 2**64)")
        score_mode = self._resolved_score_mode()
        n_threads = resolve_threads(self.n_threads)
        slot_kinds = self._slot_kinds()
        n_slots = len(slot_kinds)
        m, d = X.shape

        master = np.random.SeedSequence(self.random_state)
        ss_holdout, ss_search, ss_folds, ss_layers = master.spawn(4)

        self.search_results_ = None
        n_per_kind = self._resolve_n_per_kind(X, y_enc, n_classes, ss_holdout,
                                              ss_search, n_threads)

        ds = Dataset(X, y_enc, [str(c) for c in self.classes_])
        fold_seed = int(ss_folds.generate_state(1, np.uint64)[0])
        folds = stratified_kfold(ds, int(self.k_folds), fold_seed)

        weights = np.full(m, 1.0 / m, dtype=np.float64)
        score_sum = np.zeros((m, n_classes), dtype=np.float64)
        prior_blocks: list[np.ndarray] = []
        layers: list[CascadeLayer] = []
        accuracies: list[float] = []
        layer_seconds: list[float] = []
        best_acc = -np.inf
        best_len = 0
        bad = 0
        limit = int(self.force_layers) if self.force_layers else int(self.max_layers)
        t_start = time.perf_counter()

        for layer_index in range(1, limit + 1):
            t_layer = time.perf_counter()
            aug = build_layer_input(X, prior_blocks, self.connectivity, layer_index)
            expected = expected_input_dim(d, n_classes, n_slots, self.connectivity,
                                          layer_index)
            if aug.shape[1] != expected:
                raise RuntimeError(f"layer {layer_index} input width {aug.shape[1]} "
                                   f"violates the {self.connectivity} width law "
                                   f"({expected})")
            layer_ss = ss_layers.spawn(1)[0]
            slots, oof = fit_layer_oof(aug, y_enc, weights, folds, slot_kinds,
                                       n_per_kind, n_classes, layer_ss,
                                       n_threads=n_threads,
                                       weighted_bootstrap=self.weighted_bootstrap,
                                       refit_full=self.refit_full)
            P = layer_probability(oof, n_slots, n_classes)
            log_p = np.log(np.clip(P, self.prob_clip, 1.0))
            score_sum += (n_classes - 1.0) * (log_p - log_p.mean(axis=1, keepdims=True))
            if score_mode == "additive":
                pred = np.argmax(score_sum, axis=1)
            else:
                pred = np.argmax(P, axis=1)
            acc = float(np.mean(pred == y_enc))
            accuracies.append(acc)
            layers.append(CascadeLayer(index=layer_index, slots=slots,
                                       input_dim=aug.shape[1], oof_features=oof,
                                       layer_log_p=log_p))
            if self.score_features:
                prior_blocks.append(_slot_score_blocks(oof, n_slots, n_classes,
                                                       self.prob_clip))
            else:
                prior_blocks.append(oof)

            if self.boosting:
                weights = update_weights(weights, y_enc, P, float(self.learning_rate),
                                         float(self.prob_clip))
                total = weights.sum()
                if abs(total - 1.0) > 1e-9:
                    raise RuntimeError(f"sample weights sum to {total}, expected 1")
            layer_seconds.append(time.perf_counter() - t_layer)

            if acc > best_acc:
                best_acc = acc
                best_len = layer_index
                bad = 0
            else:
                bad += 1
                if not self.force_layers and bad >= int(self.patience):
                    break

        if self.force_layers:
            kept = layers
        else:
            kept = layers[:best_len]
        self.layers_ = kept
        self.layer_accuracies_ = accuracies
        self.fit_seconds_per_layer_ = layer_seconds
        self.total_fit_seconds_ = time.perf_counter() - t_start
        self.n_layers_ = len(kept)
        self.n_per_kind_ = {k.value: v for k, v in n_per_kind.items()}
        self.n_features_in_ = d
        self.n_classes_ = n_classes
        self.fold_assignment_ = folds
        self.score_mode_ = score_mode
        return self

    # -- inference ---------------------------------------------------------

    def _forward(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Run the cascade on new data; returns (summed scores, last layer P)."""
        X = as_feature_matrix(X)
        check_n_features(X, self.n_features_in_)
        n_classes = self.n_classes_
        n_slots = len(self.layers_[0].slots)
        scores = np.zeros((X.shape[0], n_classes), dtype=np.float64)
        blocks: list[np.ndarray] = []
        last_p = np.full((X.shape[0], n_classes), 1.0 / n_classes)
        for layer in self.layers_:
            aug = build_layer_input(X, blocks, self.connectivity, layer.index)
            slot_blocks = np.empty((X.shape[0], n_slots * n_classes), dtype=np.float64)
            for s, slot in enumerate(layer.slots):
                slot_blocks[:, s * n_classes:(s + 1) * n_classes] = \
                    slot.predict_proba(aug, use_refit=self.refit_full)
            last_p = layer_probability(slot_blocks, n_slots, n_classes)
            scores += samme_r_scores(last_p, self.prob_clip)
            if self.score_features:
                blocks.append(_slot_score_blocks(slot_blocks, n_slots, n_classes,
                                                 self.prob_clip))
            else:
                blocks.append(slot_blocks)
        return scores, last_p

    def decision_function(self, X) -> np.ndarray:
        """Summed per-layer scores; every row sums to ~0."""
        self._check_fitted()
        return self._forward(X)[0]

    def predict(self, X):
        self._check_fitted()
        scores, last_p = self._forward(X)
        basis = scores if self.score_mode_ == "additive" else last_p
        return self.classes_[np.argmax(basis, axis=1)]

    def predict_proba(self, X) -> np.ndarray:
        """Probabilities recovered from the scores (inverse of the score
        transform: normalized exp(score / (K-1))); rows sum to 1 and the
        argmax agrees with predict."""
        self._check_fitted()
        scores, last_p = self._forward(X)
        if self.score_mode_ == "last_layer":
            return last_p
        z = scores / (self.n_classes_ - 1.0)
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def _check_fitted(self):
        if not hasattr(self, "layers_") or not self.layers_:
            raise RuntimeError("this DaForestClassifier is not fitted")
