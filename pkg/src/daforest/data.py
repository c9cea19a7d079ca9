"""Tabular dataset loading, label encoding, and seeded stratified splitting.

CSV files are RFC-4180 style with a configurable delimiter; sparse files use
the libsvm ``label idx:val ...`` line format with 1-based indices. Both are
densified into a float64 matrix. Labels are re-encoded to 0..K-1 in order of
first appearance so ingestion is deterministic without sorting assumptions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .validation import DataError

_MISSING_TOKENS = {"", "?", "na", "nan", "null"}


@dataclass
class Dataset:
    """A dense feature matrix with densely encoded integer class labels.

    Invariants: ``features`` is (m, d) float64 with no NaN/inf entries,
    ``labels`` is length m with values in 0..K-1, every class id occurs at
    least once, and m >= K.
    """

    features: np.ndarray
    labels: np.ndarray
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        if self.features.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise DataError("labels must have one entry per feature row")
        if self.features.shape[0] == 0:
            raise DataError("dataset is empty")
        if not np.isfinite(self.features).all():
            r, c = np.argwhere(~np.isfinite(self.features))[0]
            raise DataError(f"non-finite feature value at row {r}, column {c}")
        k = int(self.labels.max()) + 1 if self.labels.size else 0
        if self.labels.min() < 0:
            raise DataError("labels must be non-negative class ids")
        counts = np.bincount(self.labels, minlength=k)
        if (counts == 0).any():
            missing = int(np.flatnonzero(counts == 0)[0])
            raise DataError(f"class id {missing} has no samples")
        if self.m < self.n_classes:
            raise DataError("need at least one sample per class")
        if not self.class_names:
            self.class_names = [str(i) for i in range(k)]
        if len(self.class_names) != k:
            raise DataError("class_names length must equal the class count")

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def sparsity(self) -> float:
        """Fraction of exactly-zero cells in the feature matrix."""
        return float(np.count_nonzero(self.features == 0.0)) / self.features.size

    def subset(self, rows: np.ndarray) -> "Dataset":
        return Dataset(self.features[rows], self.labels[rows], list(self.class_names))

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass
class FoldAssignment:
    """A stratified k-fold partition: ``fold_of[i]`` is sample i's fold id."""

    k: int
    fold_of: np.ndarray
    seed: int

    def fold_rows(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == f)

    def rest_rows(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != f)


def _encode_labels(raw: list[str]) -> tuple[np.ndarray, list[str]]:
    seen: dict[str, int] = {}
    out = np.empty(len(raw), dtype=np.int32)
    for i, v in enumerate(raw):
        if v not in seen:
            seen[v] = len(seen)
        out[i] = seen[v]
    return out, list(seen)


def load_csv(
    path,
    label_column,
    has_header: bool = True,
    delimiter: str = ",",
    drop_columns: tuple = (),
    impute_mean: bool = False,
) -> Dataset:
    """Load a delimited text file into a Dataset.

    ``label_column`` may be a header name (requires ``has_header``) or a
    0-based column index. ``drop_columns`` names/indices are removed before
    parsing features (for explicitly configured id-like columns). Missing
    feature cells ('', '?', 'na', 'nan', 'null', case-insensitive) are
    rejected unless ``impute_mean`` replaces them with the column mean.
    """
    with open(path, "r", newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: file is empty")

    header = None
    if has_header:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: no data rows after header")

    n_cols = len(rows[0])

    def _resolve(col, what):
        if isinstance(col, int):
            if not (-n_cols <= col < n_cols):
                raise DataError(f"{path}: {what} index {col} out of range for {n_cols} columns")
            return col % n_cols
        if header is None:
            raise DataError(f"{path}: {what} given by name {col!r} but file has no header")
        if col not in header:
            raise DataError(f"{path}: {what} {col!r} not found in header")
        return header.index(col)

    label_idx = _resolve(label_column, "label column")
    dropped = {_resolve(c, "drop column") for c in drop_columns}
    dropped.discard(label_idx)
    feat_idx = [j for j in range(n_cols) if j != label_idx and j not in dropped]
    if not feat_idx:
        raise DataError(f"{path}: no feature columns remain")

    m = len(rows)
    X = np.empty((m, len(feat_idx)), dtype=np.float64)
    raw_labels = []
    for i, r in enumerate(rows):
        if len(r) != n_cols:
            raise DataError(f"{path}: row {i + 1} has {len(r)} cells, expected {n_cols}")
        raw_labels.append(r[label_idx].strip())
        for jj, j in enumerate(feat_idx):
            cell = r[j].strip()
            if cell.lower() in _MISSING_TOKENS:
                if impute_mean:
                    X[i, jj] = np.nan
                    continue
                raise DataError(f"{path}: missing value at row {i + 1}, column {j + 1} "
                                "(enable impute_mean or clean the file)")
            try:
                X[i, jj] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric feature cell {cell!r} at row {i + 1}, "
                                f"column {j + 1}") from None

    if impute_mean and np.isnan(X).any():
        means = np.nanmean(X, axis=0)
        if not np.isfinite(means).all():
            raise DataError(f"{path}: a feature column is entirely missing")
        nan_r, nan_c = np.nonzero(np.isnan(X))
        X[nan_r, nan_c] = means[nan_c]

    labels, names = _encode_labels(raw_labels)
    return Dataset(X, labels, names)


def load_libsvm(path, d: int | None = None) -> Dataset:
    """Load a libsvm-format sparse file into a dense Dataset.

    Lines are ``label idx:val ...`` with strictly increasing 1-based indices;
    unspecified cells are 0. ``d`` overrides the inferred feature dimension.
    """
    raw_labels: list[str] = []
    entries: list[list[tuple[int, float]]] = []
    max_idx = 0
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            raw_labels.append(parts[0])
            row: list[tuple[int, float]] = []
            prev = 0
            for tok in parts[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise DataError(f"{path}: line {lineno}: bad entry {tok!r}") from None
                if idx <= prev:
                    raise DataError(f"{path}: line {lineno}: indices must be strictly "
                                    f"increasing (saw {idx} after {prev})")
                if d is not None and idx > d:
                    raise DataError(f"{path}: line {lineno}: index {idx} exceeds "
                                    f"declared dimension {d}")
                row.append((idx, val))
                prev = idx
            if row:
                max_idx = max(max_idx, row[-1][0])
            entries.append(row)
    if not entries:
        raise DataError(f"{path}: file is empty")

    width = d if d is not None else max_idx
    if width == 0:
        raise DataError(f"{path}: no feature indices found and no dimension override")
    X = np.zeros((len(entries), width), dtype=np.float64)
    for i, row in enumerate(entries):
        for idx, val in row:
            X[i, idx - 1] = val
    labels, names = _encode_labels(raw_labels)
    return Dataset(X, labels, names)


def stratified_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic per-class split; test counts are round(m_c * fraction).

    Both sides keep at least one sample of every class; a fraction that would
    empty a class on either side is an error.
    """
    if not (0.0 < test_fraction < 1.0):
        raise DataError("test_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    test_mask = np.zeros(ds.m, dtype=bool)
    for c in range(ds.n_classes):
        rows = np.flatnonzero(ds.labels == c)
        if rows.size < 2:
            raise DataError(f"class {ds.class_names[c]!r} has fewer than 2 samples")
        n_test = int(round(rows.size * test_fraction))
        if n_test == 0 or n_test == rows.size:
            raise DataError(f"test fraction {test_fraction} leaves class "
                            f"{ds.class_names[c]!r} empty on one side")
        rng.shuffle(rows)
        test_mask[rows[:n_test]] = True
    return ds.subset(~test_mask), ds.subset(test_mask)


def stratified_kfold(ds: Dataset, k: int, seed: int) -> FoldAssignment:
    """Stratified fold assignment: per class, fold sizes differ by at most 1."""
    if k < 2:
        raise DataError("k must be at least 2")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    fold_of = np.empty(ds.m, dtype=np.int32)
    for c in range(ds.n_classes):
        rows = np.flatnonzero(ds.labels == c)
        if rows.size < k:
            raise DataError(f"class {ds.class_names[c]!r} has {rows.size} samples, "
                            f"fewer than k={k}")
        rng.shuffle(rows)
        offset = int(rng.integers(k))
        fold_of[rows] = (np.arange(rows.size) + offset) % k
    return FoldAssignment(k=k, fold_of=fold_of, seed=seed)
