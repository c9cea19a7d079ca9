"""Nonparametric significance tests over classifier-accuracy matrices.

The rank machinery (per-row rankings with midrank ties, the Friedman
chi-square, the Iman-Davenport F correction, and the Wilcoxon signed-rank
normal approximation) is implemented here; scipy supplies only the
chi-square, F, and normal distribution tail functions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats as _dist

from .validation import DataError

ZERO_POLICIES = ("drop", "pratt", "zsplit")


def midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with tied values sharing the mean of their rank range."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0], dtype=np.float64)
    i = 0
    while i < values.shape[0]:
        j = i
        while j + 1 < values.shape[0] and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


@dataclass
class AccuracyMatrix:
    """n datasets x c classifiers of accuracies in [0, 1], no missing cells."""

    values: np.ndarray
    datasets: list[str]
    classifiers: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError("accuracy matrix must be 2-D")
        n, c = self.values.shape
        if n < 2 or c < 2:
            raise DataError("need at least 2 datasets and 2 classifiers")
        if len(self.datasets) != n or len(self.classifiers) != c:
            raise DataError("label lengths must match the matrix shape")
        if not np.isfinite(self.values).all():
            raise DataError("accuracy matrix has missing or non-finite cells")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise DataError("accuracies must lie in [0, 1] "
                            "(divide percentages by 100)")

    @classmethod
    def from_csv(cls, path, delimiter: str = ",") -> "AccuracyMatrix":
        """Rows are datasets, columns are classifiers; the first column holds
        dataset names and the header row holds classifier names. Cells all
        greater than 1 are treated as percentages and divided by 100."""
        with open(path, "r", newline="") as fh:
            rows = [r for r in csv.reader(fh, delimiter=delimiter) if any(r)]
        if len(rows) < 3:
            raise DataError(f"{path}: accuracy matrix needs >= 2 data rows")
        classifiers = [c.strip() for c in rows[0][1:]]
        datasets = []
        values = []
        for r in rows[1:]:
            datasets.append(r[0].strip())
            try:
                values.append([float(x) for x in r[1:]])
            except ValueError:
                raise DataError(f"{path}: non-numeric accuracy cell in row "
                                f"{r[0]!r}") from None
        vals = np.asarray(values, dtype=np.float64)
        if vals.size and vals.max() > 1.0:
            vals = vals / 100.0
        return cls(vals, datasets, classifiers)

    def column(self, name: str) -> np.ndarray:
        if name not in self.classifiers:
            raise DataError(f"classifier {name!r} not in matrix")
        return self.values[:, self.classifiers.index(name)]


@dataclass
class FriedmanResult:
    chi2: float
    p_value: float
    mean_ranks: np.ndarray


def rank_rows(M: AccuracyMatrix) -> np.ndarray:
    """Per-dataset ranks, 1 = most accurate, midranks on ties."""
    return np.vstack([midranks(-row) for row in M.values])


def friedman_test(M: AccuracyMatrix) -> FriedmanResult:
    """Friedman rank test: chi2 = 12n/(c(c+1)) * sum R_j^2 - 3n(c+1), with p
    from the chi-square distribution on c-1 degrees of freedom."""
    n, c = M.values.shape
    mean_ranks = rank_rows(M).mean(axis=0)
    chi2 = 12.0 * n / (c * (c + 1)) * float((mean_ranks ** 2).sum()) - 3.0 * n * (c + 1)
    chi2 = max(chi2, 0.0)
    p = float(_dist.chi2.sf(chi2, c - 1))
    return FriedmanResult(chi2=chi2, p_value=p, mean_ranks=mean_ranks)


def iman_davenport(chi2: float, n: int, c: int) -> tuple[float, float]:
    """F = (n-1) chi2 / (n(c-1) - chi2), on (c-1, (c-1)(n-1)) degrees of
    freedom. As chi2 approaches n(c-1) the statistic diverges; that limit is
    reported as +inf with p = 0."""
    if chi2 < 0:
        raise DataError("chi2 must be non-negative")
    denom = n * (c - 1) - chi2
    if denom <= 0:
        return float("inf"), 0.0
    f = (n - 1) * chi2 / denom
    p = float(_dist.f.sf(f, c - 1, (c - 1) * (n - 1)))
    return float(f), p


@dataclass
class WilcoxonResult:
    statistic: float  # W = min(W+, W-)
    z: float
    p_value: float
    n_used: int


def wilcoxon_signed_rank(a, b, zero_policy: str = "drop",
                         continuity: bool = False) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test via the normal approximation.

    Zero differences are handled per ``zero_policy``: "drop" removes them
    before ranking (default), "pratt" ranks them but excludes their ranks
    from both sums and subtracts their contribution from the null moments,
    and "zsplit" ranks them and splits each zero's rank equally between the
    positive and negative sums. No continuity correction by default.
    """
    if zero_policy not in ZERO_POLICIES:
        raise DataError(f"zero_policy must be one of {ZERO_POLICIES}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError("series must be 1-D and the same length")
    diff = a - b
    zero = diff == 0.0
    if zero.all():
        raise DataError("all differences are zero")
    if zero_policy == "drop":
        diff = diff[~zero]
    n = diff.shape[0]
    if (diff != 0).sum() < 5 or n < 5:
        raise DataError("need at least 5 non-zero differences for the "
                        "normal approximation")
    ranks = midranks(np.abs(diff))
    w_plus = float(ranks[diff > 0].sum())
    w_minus = float(ranks[diff < 0].sum())
    if zero_policy == "zsplit":
        half = 0.5 * float(ranks[diff == 0].sum())
        w_plus += half
        w_minus += half
    w = min(w_plus, w_minus)

    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    if zero_policy == "pratt":
        n0 = int((diff == 0).sum())
        mu -= n0 * (n0 + 1) / 4.0
        var -= n0 * (n0 + 1) * (2 * n0 + 1) / 24.0
    num = w - mu
    if continuity:
        num += 0.5  # W <= mu always, so the correction shrinks |z|
    z = num / np.sqrt(var)
    p = 2.0 * float(_dist.norm.sf(abs(z)))
    return WilcoxonResult(statistic=w, z=float(z), p_value=min(p, 1.0), n_used=n)


@dataclass
class PostHocRow:
    classifier: str
    statistic: float
    z: float
    p_value: float
    rejected: bool


def wilcoxon_against_control(M: AccuracyMatrix, control: str, alpha: float = 0.05,
                             zero_policy: str = "drop",
                             continuity: bool = False) -> list[PostHocRow]:
    """Post-hoc Wilcoxon of the control column against every other column."""
    base = M.column(control)
    rows = []
    for name in M.classifiers:
        if name == control:
            continue
        res = wilcoxon_signed_rank(base, M.column(name), zero_policy=zero_policy,
                                   continuity=continuity)
        rows.append(PostHocRow(classifier=name, statistic=res.statistic,
                               z=res.z, p_value=res.p_value,
                               rejected=res.p_value < alpha))
    return rows
