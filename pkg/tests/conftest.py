import numpy as np
import pytest


def make_blobs(n_per_class, centers, spread=1.0, seed=0):
    """Gaussian blobs with one center per class; returns (X, y)."""
    rng = np.random.default_rng(seed)
    parts, labels = [], []
    for c, center in enumerate(centers):
        parts.append(rng.normal(loc=center, scale=spread,
                                size=(n_per_class, len(center))))
        labels.extend([c] * n_per_class)
    X = np.vstack(parts)
    y = np.asarray(labels, dtype=np.int64)
    order = rng.permutation(X.shape[0])
    return X[order], y[order]


@pytest.fixture
def blobs_2class():
    return make_blobs(100, [(-2.0, -2.0, 0.0), (2.0, 2.0, 0.0)], spread=1.0, seed=42)


@pytest.fixture
def blobs_3class():
    return make_blobs(40, [(-3.0, 0.0), (3.0, 0.0), (0.0, 4.0)], spread=1.0, seed=3)


def write_csv(path, X, y, class_names=None, header=True):
    names = class_names or [str(c) for c in sorted(set(int(v) for v in y))]
    with open(path, "w") as fh:
        if header:
            cols = [f"f{j}" for j in range(X.shape[1])] + ["label"]
            fh.write(",".join(cols) + "\n")
        for row, lab in zip(X, y):
            fh.write(",".join(f"{v:.10g}" for v in row) + f",{names[int(lab)]}\n")
    return path
