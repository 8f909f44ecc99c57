import numpy as np
import pytest

from tabadm.diffusion import linear_schedule
from tabadm.errors import ShapeError
from tabadm.model import ModelConfig, ModelParams, forward, init
from tabadm.ndcore import Rng
from tabadm.scorer import score_sample, score_set
from tabadm.trainer import Checkpoint


def _ckpt(d=3, T=12, H=8, seed=0, params=None):
    mc = ModelConfig(d=d, H=H, D_t=4)
    p = init(mc, Rng(seed)) if params is None else params
    if params is None:
        # nonzero biases so every path is exercised
        r = np.random.default_rng(seed)
        for name, arr in p.items():
            if name.startswith("b_"):
                arr[:] = 0.1 * r.standard_normal(arr.shape)
    return Checkpoint(p, mc, linear_schedule(T))


def _loop_score(ckpt, x0, E):
    total = 0.0
    for t in range(1, ckpt.schedule.T + 1):
        a, b = ckpt.schedule.coefficients(t)
        x_t = a * x0 + b * E[t - 1]
        eh, _ = forward(ckpt.params, x_t[None, :], t)
        total += np.mean((E[t - 1] - eh[0]) ** 2)
    return total


def test_matches_per_timestep_loop():
    ck = _ckpt()
    X = np.random.default_rng(1).uniform(-1, 1, size=(6, 3))
    run = score_set(ck, X, seed=4)
    assert np.array_equal(run.E, Rng(4).gaussian(12, 3))
    for i, x in enumerate(X):
        assert run.scores[i] == pytest.approx(_loop_score(ck, x, run.E), rel=1e-12)


def test_zero_model_scores_noise_energy():
    mc = ModelConfig(d=4, H=5, D_t=4)
    ck = Checkpoint(ModelParams.zeros(mc), mc, linear_schedule(9))
    X = np.random.default_rng(0).uniform(-1, 1, size=(3, 4))
    run = score_set(ck, X, seed=2)
    expect = np.sum(np.mean(run.E ** 2, axis=1))
    np.testing.assert_allclose(run.scores, expect, rtol=1e-14)


def test_output_bias_only_model():
    mc = ModelConfig(d=2, H=3, D_t=4)
    p = ModelParams.zeros(mc)
    p.b_out[:] = [0.5, -1.0]
    ck = Checkpoint(p, mc, linear_schedule(4))
    E = np.array([[0.0, 0.0], [1.0, 1.0], [-1.0, 2.0], [0.5, -1.0]])
    # sum over t of mean((E_t - c)^2)
    expect = (0.25 + 1) / 2 + (0.25 + 4) / 2 + (2.25 + 9) / 2 + (0 + 0) / 2
    assert score_sample(ck, np.array([0.3, -0.7]), E) == pytest.approx(expect, rel=1e-15)


def test_single_timestep():
    ck = _ckpt(T=1)
    x = np.array([0.2, -0.4, 0.9])
    E = Rng(0).gaussian(1, 3)
    assert score_sample(ck, x, E) == pytest.approx(_loop_score(ck, x, E), rel=1e-12)


def test_row_independence_and_order():
    ck = _ckpt()
    X = np.random.default_rng(3).uniform(-1, 1, size=(9, 3))
    base = score_set(ck, X, seed=7).scores
    perm = np.random.default_rng(0).permutation(9)
    assert np.array_equal(score_set(ck, X[perm], seed=7).scores, base[perm])
    assert np.array_equal(score_set(ck, X[2:4], seed=7).scores, base[2:4])
    dup = score_set(ck, np.vstack([X[5], X[5]]), seed=7).scores
    assert dup[0] == dup[1] == base[5]


def test_parallel_is_bit_identical():
    ck = _ckpt()
    X = np.random.default_rng(4).uniform(-1, 1, size=(25, 3))
    a = score_set(ck, X, seed=1, jobs=1).scores
    b = score_set(ck, X, seed=1, jobs=4).scores
    assert a.tobytes() == b.tobytes()


def test_seed_controls_noise():
    ck = _ckpt()
    X = np.random.default_rng(5).uniform(-1, 1, size=(4, 3))
    assert np.array_equal(score_set(ck, X, 3).scores, score_set(ck, X, 3).scores)
    assert not np.array_equal(score_set(ck, X, 3).scores, score_set(ck, X, 4).scores)


def test_fresh_noise_per_row():
    ck = _ckpt()
    x = np.array([0.1, 0.2, 0.3])
    X = np.vstack([x, x, x])
    run = score_set(ck, X, seed=6, fresh_noise=True)
    assert run.fresh_noise
    assert len(set(run.scores.tolist())) == 3
    rng = Rng(6)
    first = rng.gaussian(12, 3)
    assert np.array_equal(run.E, first)
    assert run.scores[1] == pytest.approx(_loop_score(ck, x, rng.gaussian(12, 3)), rel=1e-12)


def test_empty_set():
    run = score_set(_ckpt(), np.zeros((0, 3)), seed=0)
    assert run.scores.shape == (0,)


def test_shape_errors():
    ck = _ckpt()
    with pytest.raises(ShapeError):
        score_set(ck, np.zeros((2, 4)), seed=0)
    with pytest.raises(ShapeError):
        score_sample(ck, np.zeros(3), np.zeros((11, 3)))
    with pytest.raises(ShapeError):
        score_sample(ck, np.zeros(2), np.zeros((12, 2)))
