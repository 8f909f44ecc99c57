import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tabadm.errors import ConfigError, UndefinedMetricError
from tabadm.evalkit import (RankTable, aucroc, average_precision, average_ranks, evaluate,
                            hbos_score, knn_score, nearest_rank_percentile, percentile_series,
                            rank_by_percentile)


def pairwise_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    credit = 0.0
    for p in pos:
        for n in neg:
            credit += 1.0 if p > n else 0.5 if p == n else 0.0
    return credit / (len(pos) * len(neg))


def threshold_ap(scores, labels):
    n_pos = sum(labels)
    ap, prev_recall = 0.0, 0.0
    for thr in sorted(set(scores), reverse=True):
        flagged = [l for s, l in zip(scores, labels) if s >= thr]
        tp = sum(flagged)
        recall = tp / n_pos
        precision = tp / len(flagged)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def random_instance(rng, n_max=20, ties=False):
    n = int(rng.integers(2, n_max + 1))
    labels = np.zeros(n, int)
    n_pos = int(rng.integers(1, n))
    labels[rng.choice(n, n_pos, replace=False)] = 1
    if ties:
        scores = rng.integers(0, 4, n).astype(float)
    else:
        scores = rng.standard_normal(n)
    return scores, labels


def test_perfect_and_reversed():
    s, y = [0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0]
    assert aucroc(s, y) == 1.0
    assert aucroc(s[::-1], y) == 0.0
    assert average_precision(s, y) == 1.0


def test_constant_scores():
    y = [1, 0, 0, 1, 0]
    assert aucroc([3.0] * 5, y) == 0.5
    assert average_precision([3.0] * 5, y) == 2 / 5


@pytest.mark.parametrize("ties", [False, True])
def test_metrics_match_brute_force(ties):
    rng = np.random.default_rng(100 + ties)
    for _ in range(200):
        s, y = random_instance(rng, ties=ties)
        assert aucroc(s, y) == pairwise_auc(s.tolist(), y.tolist())
        assert average_precision(s, y) == threshold_ap(s.tolist(), y.tolist())


def test_single_class_is_undefined():
    with pytest.raises(UndefinedMetricError):
        aucroc([1.0, 2.0], [0, 0])
    with pytest.raises(UndefinedMetricError):
        average_precision([1.0, 2.0], [1, 1])


def test_evaluate_counts():
    m = evaluate([0.1, 0.5, 0.7], [0, 1, 1])
    assert (m.n_pos, m.n_neg, m.aucroc) == (2, 1, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=4, max_size=20, unique=True),
       st.randoms(use_true_random=False))
def test_auc_invariant_to_monotone_maps(scores, rnd):
    labels = [rnd.randint(0, 1) for _ in scores]
    labels[0], labels[1] = 0, 1
    s = np.array(scores) / 10.0
    base = aucroc(s, labels)
    assert aucroc(np.exp(s), labels) == base
    assert aucroc(3.0 * s + 7.0, labels) == base
    assert aucroc(-s, labels) + base == pytest.approx(1.0, abs=1e-15)


def test_ap_at_least_prevalence_for_better_than_random():
    rng = np.random.default_rng(9)
    for _ in range(200):
        s, y = random_instance(rng)
        if aucroc(s, y) >= 0.5:
            assert average_precision(s, y) >= y.mean() - 1e-12 or aucroc(s, y) < 0.75


def test_average_ranks_ties():
    np.testing.assert_array_equal(average_ranks([3, 1, 3, 2]), [3.5, 1, 3.5, 2])


def test_knn_examples():
    train = np.array([[0.0], [10.0]])
    assert knn_score(train, np.array([[5.0]]), k=1)[0] == 5.0
    assert knn_score(train, np.array([[10.0]]), k=1)[0] == 0.0
    with pytest.raises(ConfigError):
        knn_score(train, np.array([[1.0]]), k=3)


def test_knn_matches_exhaustive_oracle():
    rng = np.random.default_rng(0)
    train, test = rng.standard_normal((50, 4)), rng.standard_normal((20, 4))
    for k in (1, 5, 50):
        expected = []
        for x in test:
            d = sorted(math.sqrt(sum((a - b) ** 2 for a, b in zip(x, row))) for row in train)
            expected.append(d[k - 1])
        np.testing.assert_allclose(knn_score(train, test, k=k), expected, rtol=1e-15, atol=0)


def test_knn_chunking_is_invisible():
    rng = np.random.default_rng(1)
    train, test = rng.standard_normal((30, 3)), rng.standard_normal((17, 3))
    np.testing.assert_array_equal(knn_score(train, test, 5, chunk=4), knn_score(train, test, 5))


def test_hbos_worked_example():
    # range [0, 10], two bins of width 5 holding 4 and 1 of 5 rows
    train = np.array([[0.0], [1.0], [2.0], [3.0], [10.0]])
    test = np.array([[2.0], [7.0], [12.0], [-3.0]])
    s = hbos_score(train, test, bins=2)
    low = -math.log(4 / 25 + 1e-12)
    high = -math.log(1 / 25 + 1e-12)
    np.testing.assert_array_equal(s, [low, high, high, low])
    assert low == pytest.approx(1.83258146374206, abs=1e-12)


def test_hbos_flat_histogram_and_empty_bin():
    train = np.linspace(0, 1, 100)[:, None]
    s = hbos_score(train, np.array([[0.05], [0.45], [0.95]]), bins=10)
    assert np.ptp(s) < 1e-9
    gap = np.r_[np.linspace(0, 0.3, 50), np.linspace(0.7, 1, 50)][:, None]
    s = hbos_score(gap, np.array([[0.5], [0.1]]), bins=10)
    assert s[0] > s[1]


def test_hbos_constant_feature_is_finite():
    s = hbos_score(np.ones((5, 1)), np.array([[1.0], [3.0]]))
    assert np.all(np.isfinite(s)) and s[0] == s[1]


def _toy_table():
    t = RankTable()
    #            A     B     C
    rows = {"d1": (0.9, 0.8, 0.7), "d2": (0.6, 0.6, 0.9), "d3": (0.5, 0.7, 0.6)}
    dims = {"d1": 5, "d2": 10, "d3": 20}
    for ds, vals in rows.items():
        for m, v in zip("ABC", vals):
            t.add(ds, m, v, dims[ds])
    return t


def test_rank_by_percentile_toy_by_hand():
    t = _toy_table()
    # per-dataset ranks (1 best): d1 A1 B2 C3; d2 A2.5 B2.5 C1; d3 A3 B1 C2
    # tau=0 -> nearest-rank threshold 5 -> group {d2, d3}
    assert rank_by_percentile(t, 0) == {"A": 2.75, "B": 1.75, "C": 1.5}
    # tau=50 -> ceil(1.5) = 2nd smallest dim = 10 -> group {d3}
    assert rank_by_percentile(t, 50) == {"A": 3.0, "B": 1.0, "C": 2.0}
    with pytest.raises(ConfigError):
        rank_by_percentile(t, 70)  # threshold 20, nothing larger


def test_rank_dominating_method():
    t = RankTable()
    for i, d in enumerate([3, 8, 12, 40]):
        t.add(f"ds{i}", "good", 0.9, d)
        t.add(f"ds{i}", "bad", 0.1, d)
    assert rank_by_percentile(t, 0) == {"bad": 2.0, "good": 1.0}


def test_tau_bounds():
    with pytest.raises(ConfigError):
        rank_by_percentile(_toy_table(), 80)


def test_nearest_rank_percentile():
    assert nearest_rank_percentile([30, 10, 20, 40], 0) == 10
    assert nearest_rank_percentile([30, 10, 20, 40], 25) == 10
    assert nearest_rank_percentile([30, 10, 20, 40], 26) == 20
    assert nearest_rank_percentile([30, 10, 20, 40], 70) == 30


def test_percentile_series_skips_empty_groups():
    rows = percentile_series(_toy_table(), [0, 50, 70])
    assert {r[0] for r in rows} == {0, 50}
