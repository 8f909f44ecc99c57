"""CSV ingestion, [-1, 1] scaling and the split / contamination constructions."""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .ndcore import Rng


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray = None
    feature_names: list = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise DataError(f"X must be 2-D, got shape {self.X.shape}")
        if not self.feature_names:
            self.feature_names = [f"x{j}" for j in range(self.X.shape[1])]
        if len(self.feature_names) != self.X.shape[1]:
            raise DataError("feature_names length does not match the number of columns")
        if self.y is not None:
            y = np.asarray(self.y)
            if y.shape != (self.X.shape[0],):
                raise DataError(f"labels have shape {y.shape}, expected ({self.X.shape[0]},)")
            if not np.all((y == 0) | (y == 1)):
                raise DataError("labels must be 0 (inlier) or 1 (outlier)")
            self.y = y.astype(np.int64)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def anomaly_rate(self):
        return float(np.mean(self.y)) if self.y is not None and self.n else float("nan")

    def require_labels(self):
        if self.y is None:
            raise ConfigError(f"dataset {self.name or '<unnamed>'} has no labels")
        return self.y

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], None if self.y is None else self.y[idx],
                       list(self.feature_names), self.name)


def load_csv(path, label_column=None, name=None):
    """Read a headered numeric CSV.

    The label column, when named, is split off into ``y``; every other column is
    a feature.  Raises :class:`DataError` naming the row and column of the first
    cell that does not parse as a float.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        label_idx = None
        if label_column is not None:
            if label_column not in header:
                raise ConfigError(f"{path}: label column {label_column!r} not in header {header}")
            label_idx = header.index(label_column)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, found {len(row)}")
            vals = []
            for j, cell in enumerate(row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: column {header[j]!r} (#{j + 1}) is not numeric: {cell!r}"
                    ) from None
            rows.append(vals)
    arr = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    if label_idx is None:
        X, y, names = arr, None, header
    else:
        y = arr[:, label_idx]
        if not np.all((y == 0) | (y == 1)):
            raise DataError(f"{path}: label column {label_column!r} must contain only 0/1")
        keep = [j for j in range(len(header)) if j != label_idx]
        X, names = arr[:, keep], [header[j] for j in keep]
    if name is None:
        name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return Dataset(X, y, names, name)


def save_csv(ds, path, label_column="label"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = list(ds.feature_names)
        if ds.y is not None:
            header.append(label_column)
        w.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.X[i]]
            if ds.y is not None:
                row.append(str(int(ds.y[i])))
            w.writerow(row)


@dataclass
class Normalizer:
    """Per-feature min/max affine map onto [-1, 1] fitted on training rows."""

    min: np.ndarray
    max: np.ndarray

    def apply(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != len(self.min):
            raise DataError(f"data has {X.shape[-1]} features, normalizer expects {len(self.min)}")
        span = self.max - self.min
        const = span == 0
        safe = np.where(const, 1.0, span)
        out = 2.0 * (X - self.min) / safe - 1.0
        # constant features map to 0; test values are never clamped
        return np.where(const, 0.0, out)

    def to_dict(self):
        return {"min": self.min.tolist(), "max": self.max.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["min"], dtype=np.float64), np.asarray(d["max"], dtype=np.float64))


def fit_normalizer(train):
    X = train.X if isinstance(train, Dataset) else np.asarray(train, dtype=np.float64)
    if X.shape[0] < 1:
        raise DataError("cannot fit a normalizer on zero rows")
    return Normalizer(X.min(axis=0), X.max(axis=0))


def apply(norm, X):
    return norm.apply(X)


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def stratified_split_indices(y, train_frac=0.7, seed=0):
    """Train/test row indices, each class split independently.

    A class of size ``n_c`` contributes ``round(train_frac * n_c)`` training rows,
    capped so at least one row of every non-empty class lands in the test part.
    """
    if not 0.0 < train_frac < 1.0:
        raise ConfigError(f"train_frac must lie in (0, 1), got {train_frac}")
    y = np.asarray(y)
    rng = Rng(seed)
    train, test = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if not len(idx):
            continue
        n_train = min(_round_half_up(train_frac * len(idx)), len(idx) - 1)
        perm = idx[rng.permutation(len(idx))]
        train.append(perm[:n_train])
        test.append(perm[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_split(ds, train_frac=0.7, seed=0):
    y = ds.require_labels()
    tr, te = stratified_split_indices(y, train_frac, seed)
    return ds.subset(tr), ds.subset(te)


def split_manifest(train_idx, test_idx, seed, train_frac=0.7):
    return {
        "seed": int(seed),
        "train_frac": train_frac,
        "train": [int(i) for i in train_idx],
        "test": [int(i) for i in test_idx],
    }


def write_manifest(manifest, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)


def stratified_truncate(ds, n_max, seed=0):
    """Subsample to ``n_max`` rows keeping the anomaly rate (used for large sets)."""
    y = ds.require_labels()
    if ds.n <= n_max:
        return ds
    frac = n_max / ds.n
    rng = Rng(seed)
    n_out = _round_half_up(frac * int(y.sum()))
    n_out = min(n_out, n_max)
    parts = []
    for cls, count in ((1, n_out), (0, n_max - n_out)):
        idx = np.flatnonzero(y == cls)
        parts.append(idx[rng.permutation(len(idx))[:count]])
    return ds.subset(np.sort(np.concatenate(parts)))


def _anomalies_for_ratio(n_inliers, ratio):
    """Largest ``a`` with ``a / (n_inliers + a) <= ratio``."""
    if ratio <= 0:
        return 0
    # guard float noise like 0.1 * 900 / 0.9 = 99.99999...
    return int(math.floor(ratio * n_inliers / (1.0 - ratio) + 1e-9))


def build_contaminated(train_pool, ratio, test_pool, test_ratio=0.10, seed=0):
    """Training set with anomaly fraction ``ratio`` and a test set fixed at ``test_ratio``.

    All pool inliers are kept for training and anomalies are added from a seeded
    permutation of the pool anomalies, so for a fixed seed the anomaly sets for
    increasing ratios are nested.  The test set keeps all its inliers when enough
    anomalies exist; otherwise inliers are subsampled to hit the rate exactly.
    """
    if not 0.0 <= ratio < 1.0 or not 0.0 < test_ratio < 1.0:
        raise ConfigError(f"ratios must lie in [0, 1): ratio={ratio}, test_ratio={test_ratio}")
    ytr = train_pool.require_labels()
    yte = test_pool.require_labels()
    rng = Rng(seed)

    tr_in = np.flatnonzero(ytr == 0)
    tr_out = np.flatnonzero(ytr == 1)
    n_add = _anomalies_for_ratio(len(tr_in), ratio)
    if n_add > len(tr_out):
        raise ConfigError(
            f"contamination {ratio:.3f} needs {n_add} anomalies but the training pool "
            f"has {len(tr_out)} (short by {n_add - len(tr_out)})"
        )
    chosen = tr_out[rng.permutation(len(tr_out))[:n_add]]
    train_c = train_pool.subset(np.sort(np.concatenate([tr_in, chosen])))

    te_in = np.flatnonzero(yte == 0)
    te_out = np.flatnonzero(yte == 1)
    n_te_out = _anomalies_for_ratio(len(te_in), test_ratio)
    n_te_in = len(te_in)
    if n_te_out > len(te_out):
        n_te_out = len(te_out)
        n_te_in = int(math.floor(n_te_out * (1.0 - test_ratio) / test_ratio + 1e-9))
    if n_te_out < 1:
        raise ConfigError("test pool has no anomalies to build a contaminated test set")
    te_in = te_in[rng.permutation(len(te_in))[:n_te_in]]
    te_out = te_out[rng.permutation(len(te_out))[:n_te_out]]
    test_fixed = test_pool.subset(np.sort(np.concatenate([te_in, te_out])))
    return train_c, test_fixed
