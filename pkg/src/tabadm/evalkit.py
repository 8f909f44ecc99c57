"""Ranking metrics, two reference detectors and rank aggregation by dimension percentile.

Scores are oriented so that larger means more anomalous; label 1 marks an outlier.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, UndefinedMetricError


@dataclass(frozen=True)
class MetricResult:
    aucroc: float
    ap: float
    n_pos: int
    n_neg: int

    def to_dict(self):
        return {"aucroc": self.aucroc, "ap": self.ap, "n_pos": self.n_pos, "n_neg": self.n_neg}


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeError(f"scores {scores.shape} and labels {labels.shape} must be equal-length 1-D")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"metric undefined with {n_pos} positives and {n_neg} negatives"
        )
    return scores, pos, n_pos, n_neg


def average_ranks(values):
    """1-based ascending ranks with ties given their mean rank."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(len(values))
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], len(values)]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + 1 + e) / 2.0
    return ranks


def aucroc(scores, labels):
    """Area under the ROC curve as the normalized Mann-Whitney statistic (ties count 1/2)."""
    scores, pos, n_pos, n_neg = _check_binary(scores, labels)
    ranks = average_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scores, labels):
    """Step-interpolated area under the precision-recall curve.

    Thresholds run over the distinct scores in descending order; tied scores
    enter together at one threshold.
    """
    scores, pos, n_pos, _ = _check_binary(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    hits = pos[order].astype(np.int64)
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(hits)[last_of_group]
    seen = (np.flatnonzero(last_of_group) + 1)
    precision = tp / seen
    recall = tp / n_pos
    terms = np.diff(recall, prepend=0.0) * precision
    # cumsum accumulates left to right, matching a plain loop
    return float(np.cumsum(terms)[-1])


def evaluate(scores, labels):
    _, _, n_pos, n_neg = _check_binary(scores, labels)
    return MetricResult(aucroc(scores, labels), average_precision(scores, labels), n_pos, n_neg)


def knn_score(train_X, test_X, k=5, chunk=256):
    """Distance from each test row to its k-th nearest training row (Euclidean)."""
    train_X = np.asarray(train_X, dtype=np.float64)
    test_X = np.asarray(test_X, dtype=np.float64)
    if k < 1 or k > len(train_X):
        raise ConfigError(f"k={k} must be between 1 and the number of training rows ({len(train_X)})")
    if train_X.shape[1] != test_X.shape[1]:
        raise ShapeError("train and test feature counts differ")
    out = np.empty(len(test_X))
    # bound the (chunk, n_train, d) temporary to roughly 32 MB
    per_row = max(1, train_X.shape[0] * train_X.shape[1])
    chunk = max(1, min(chunk, 4_000_000 // per_row))
    for s in range(0, len(test_X), chunk):
        diff = test_X[s:s + chunk, None, :] - train_X[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        out[s:s + chunk] = np.partition(dist, k - 1, axis=1)[:, k - 1]
    return out


HBOS_EPS = 1e-12


def hbos_score(train_X, test_X, bins=10):
    """Histogram-based outlier score: sum over features of -log(bin density).

    Each feature gets ``bins`` equal-width bins spanning its training range.  The
    density of a bin is ``count / (n * width) + 1e-12``; test values outside the
    range are assigned to the nearest edge bin; a constant feature puts every
    value in its first bin.
    """
    if bins < 1:
        raise ConfigError(f"bins must be >= 1, got {bins}")
    train_X = np.asarray(train_X, dtype=np.float64)
    test_X = np.asarray(test_X, dtype=np.float64)
    if train_X.shape[1] != test_X.shape[1]:
        raise ShapeError("train and test feature counts differ")
    n = len(train_X)
    score = np.zeros(len(test_X))
    for j in range(train_X.shape[1]):
        lo, hi = train_X[:, j].min(), train_X[:, j].max()
        if hi > lo:
            width = (hi - lo) / bins
            tr_bin = np.clip(np.floor((train_X[:, j] - lo) / width), 0, bins - 1).astype(np.int64)
            te_bin = np.clip(np.floor((test_X[:, j] - lo) / width), 0, bins - 1).astype(np.int64)
        else:
            width = 1.0
            tr_bin = np.zeros(n, dtype=np.int64)
            te_bin = np.zeros(len(test_X), dtype=np.int64)
        counts = np.bincount(tr_bin, minlength=bins)
        density = counts / (n * width) + HBOS_EPS
        score += -np.log(density[te_bin])
    return score


@dataclass
class RankTable:
    """Per-dataset method scores (higher is better) and dataset dimensions."""

    scores: dict = field(default_factory=dict)  # dataset -> {method: score}
    dims: dict = field(default_factory=dict)    # dataset -> d

    def add(self, dataset, method, score, dim):
        self.scores.setdefault(dataset, {})[method] = float(score)
        self.dims[dataset] = int(dim)

    @property
    def methods(self):
        ms = set()
        for row in self.scores.values():
            ms.update(row)
        return sorted(ms)

    def dataset_ranks(self, dataset):
        """Rank 1 = best score; ties averaged."""
        row = self.scores[dataset]
        methods = sorted(row)
        ranks = average_ranks([-row[m] for m in methods])
        return dict(zip(methods, ranks.tolist()))


def nearest_rank_percentile(values, tau):
    """Nearest-rank percentile; ``tau = 0`` returns the minimum."""
    vals = sorted(values)
    if not vals:
        raise ConfigError("no values to take a percentile of")
    rank = max(1, math.ceil(tau / 100.0 * len(vals)))
    return vals[rank - 1]


def rank_by_percentile(table, tau):
    """Average method rank over datasets whose dimension exceeds the tau-th percentile."""
    if not 0 <= tau <= 70:
        raise ConfigError(f"tau must lie in [0, 70], got {tau}")
    threshold = nearest_rank_percentile(list(table.dims.values()), tau)
    group = sorted(ds for ds, d in table.dims.items() if d > threshold)
    if not group:
        raise ConfigError(f"no datasets with dimension above {threshold} (tau={tau})")
    methods = table.methods
    for ds in group:
        missing = set(methods) - set(table.scores[ds])
        if missing:
            raise ConfigError(f"dataset {ds} lacks results for {sorted(missing)}")
    totals = dict.fromkeys(methods, 0.0)
    for ds in group:
        for m, r in table.dataset_ranks(ds).items():
            totals[m] += r
    return {m: totals[m] / len(group) for m in methods}


def percentile_series(table, taus=range(0, 71, 10)):
    """Rows ``(tau, method, average_rank, n_datasets)`` for every tau with a non-empty group."""
    rows = []
    for tau in taus:
        threshold = nearest_rank_percentile(list(table.dims.values()), tau)
        n_group = sum(1 for d in table.dims.values() if d > threshold)
        if n_group == 0:
            continue
        for m, r in rank_by_percentile(table, tau).items():
            rows.append((tau, m, r, n_group))
    return rows
