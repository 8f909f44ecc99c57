import math

import numpy as np
import pytest

from tabadm.errors import ConfigError
from tabadm.model import (ModelConfig, ModelParams, backward, forward, hidden_width_for, init,
                          time_embed)
from tabadm.ndcore import Rng


def _random_params(cfg, seed, scale=0.5):
    rng = np.random.default_rng(seed)
    p = ModelParams.zeros(cfg)
    for name, arr in p.items():
        setattr(p, name, scale * rng.standard_normal(arr.shape))
    return p


# --- straight-line re-implementation, one sample at a time, plain Python math ---

def _ref_embed(t, D_t):
    half = D_t // 2
    freqs = [10000.0 ** (-j / (half - 1)) for j in range(half)]
    return [math.sin(t * w) for w in freqs] + [math.cos(t * w) for w in freqs]


def _lin(W, b, v):
    return [sum(W[i][j] * v[j] for j in range(len(v))) + b[i] for i in range(len(W))]


def _silu(z):
    return z / (1.0 + math.exp(-z))


def _ref_forward(p, x, t):
    P = {n: a.tolist() for n, a in p.items()}
    emb = _ref_embed(t, len(P["W_t1"][0]))
    tv = _lin(P["W_t2"], P["b_t2"], [_silu(v) for v in _lin(P["W_t1"], P["b_t1"], emb)])
    h = _lin(P["W_in"], P["b_in"], list(x))
    z = [a + b for a, b in zip(_lin(P["W_r1"], P["b_r1"], h), tv)]
    r = [a + b for a, b in zip(h, _lin(P["W_r2"], P["b_r2"], [_silu(v) for v in z]))]
    g = [v if v >= 0 else 0.2 * v for v in r]
    return _lin(P["W_out"], P["b_out"], g)


def test_width_policy():
    assert hidden_width_for(7) == 512
    assert hidden_width_for(100) == 512
    assert hidden_width_for(166) == 1024
    assert hidden_width_for(1000) == 1024
    assert hidden_width_for(1555) == 2048
    assert ModelConfig.for_dim(33).H == 512 and ModelConfig.for_dim(33, H=16).H == 16


def test_odd_time_embedding_rejected():
    with pytest.raises(ConfigError):
        time_embed(3, 5)
    with pytest.raises(ConfigError):
        ModelConfig(d=3, H=8, D_t=5)


def test_time_embed_zero():
    e = time_embed(0, 8)
    np.testing.assert_array_equal(e[:4], 0.0)
    np.testing.assert_array_equal(e[4:], 1.0)


def test_time_embed_first_component_is_sin_t():
    for t in (1, 17, 100):
        assert time_embed(t, 64)[0] == math.sin(t)


def test_time_embed_worked_example():
    np.testing.assert_allclose(
        time_embed(1, 4),
        [0.8414709848078965, 9.999999983333334e-05, 0.5403023058681398, 0.999999995],
        rtol=1e-14,
    )


def test_time_embed_batched():
    rows = time_embed(np.array([1, 2, 3]), 6)
    for i, t in enumerate((1, 2, 3)):
        np.testing.assert_array_equal(rows[i], time_embed(t, 6))


def test_zero_params_predict_zero():
    cfg = ModelConfig(d=4, H=6, D_t=4)
    x = np.random.default_rng(0).standard_normal((3, 4))
    eps, _ = forward(ModelParams.zeros(cfg), x, 5)
    np.testing.assert_array_equal(eps, 0.0)


def test_input_projection_is_linear():
    cfg = ModelConfig(d=3, H=3, D_t=4)
    p = ModelParams.zeros(cfg)
    p.W_in = np.eye(3)
    x = np.array([0.5, -1.0, 2.0])
    _, t1 = forward(p, x, 1)
    _, t2 = forward(p, 2 * x, 1)
    np.testing.assert_array_equal(t2.h, 2 * t1.h)


def test_forward_matches_straight_line_reference():
    cfg = ModelConfig(d=5, H=7, D_t=6)
    p = _random_params(cfg, 1)
    rng = np.random.default_rng(2)
    for t in (1, 13, 100):
        x = rng.standard_normal(5)
        eps, _ = forward(p, x, t)
        assert np.max(np.abs(eps - np.array(_ref_forward(p, x, t)))) < 1e-12


def test_shared_and_per_row_timesteps_agree():
    cfg = ModelConfig(d=3, H=8, D_t=4)
    p = _random_params(cfg, 3)
    x = np.random.default_rng(4).standard_normal((5, 3))
    shared, _ = forward(p, x, 9)
    per_row, _ = forward(p, x, np.full(5, 9))
    np.testing.assert_allclose(shared, per_row, rtol=0, atol=1e-14)


def _mse(p, x, t, target):
    eps, _ = forward(p, x, t)
    return float(np.mean(np.mean((target - eps) ** 2, axis=1)))


def _mse_grad(p, x, t, target):
    eps, tape = forward(p, x, t)
    B, d = target.shape
    return backward(p, tape, -2.0 / (B * d) * (target - eps))


def gradient_check(cfg, seed, h=1e-5, per_row_t=False):
    """Largest per-group relative error between analytic and central-difference gradients."""
    rng = np.random.default_rng(seed)
    p = _random_params(cfg, seed)
    x = rng.standard_normal((4, cfg.d))
    target = rng.standard_normal((4, cfg.d))
    t = rng.integers(1, 101, 4) if per_row_t else int(rng.integers(1, 101))
    grads = _mse_grad(p, x, t, target)
    worst = {}
    for name, arr in p.items():
        num = np.empty_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = _mse(p, x, t, target)
            arr[idx] = old - h
            down = _mse(p, x, t, target)
            arr[idx] = old
            num[idx] = (up - down) / (2 * h)
        ana = getattr(grads, name)
        denom = max(np.linalg.norm(ana) + np.linalg.norm(num), 1e-12)
        worst[name] = np.linalg.norm(ana - num) / denom
    return worst


@pytest.mark.parametrize("per_row_t", [False, True])
def test_gradients_match_finite_differences(per_row_t):
    cfg = ModelConfig(d=3, H=8, D_t=4)
    for seed in range(5):
        errs = gradient_check(cfg, seed, per_row_t=per_row_t)
        assert max(errs.values()) < 1e-4, errs


def test_zero_upstream_gives_zero_gradients():
    cfg = ModelConfig(d=3, H=8, D_t=4)
    p = _random_params(cfg, 0)
    _, tape = forward(p, np.ones((2, 3)), 4)
    g = backward(p, tape, np.zeros((2, 3)))
    for _, arr in g.items():
        np.testing.assert_array_equal(arr, 0.0)


def test_output_bias_gradient_is_upstream():
    cfg = ModelConfig(d=3, H=8, D_t=4)
    p = _random_params(cfg, 0)
    up = np.array([0.25, -1.5, 3.0])
    _, tape = forward(p, np.array([0.1, 0.2, 0.3]), 7)
    np.testing.assert_array_equal(backward(p, tape, up).b_out, up)


def test_leaky_gate_at_zero_takes_positive_branch():
    cfg = ModelConfig(d=1, H=1, D_t=2)
    p = ModelParams.zeros(cfg)
    p.W_out[:] = 1.0
    _, tape = forward(p, np.array([0.0]), 1)
    assert tape.r[0, 0] == 0.0
    g = backward(p, tape, np.array([1.0]))
    # d eps / d b_r2 = W_out * gate'(0) = 1
    assert g.b_r2[0] == 1.0


def test_init_bounds_and_zero_biases():
    cfg = ModelConfig(d=4, H=16, D_t=4)
    p = init(cfg, Rng(0))
    assert np.all(np.abs(p.W_in) <= 0.5)
    assert np.all(np.abs(p.W_t1) <= 0.5)
    assert np.all(np.abs(p.W_r1) <= 0.25)
    for name, arr in p.items():
        if name.startswith("b_"):
            np.testing.assert_array_equal(arr, 0.0)


def test_init_deterministic():
    cfg = ModelConfig(d=4, H=16, D_t=4)
    a, b = init(cfg, Rng(9)), init(cfg, Rng(9))
    for (_, x), (_, y) in zip(a.items(), b.items()):
        assert x.tobytes() == y.tobytes()


def test_init_mean_near_zero():
    cfg = ModelConfig(d=4, H=316, D_t=4)  # W_r1/W_r2/W_t2 alone hold ~3e5 entries
    p = init(cfg, Rng(1))
    w = np.concatenate([p.W_r1.ravel(), p.W_r2.ravel()])[:100_000]
    bound = math.sqrt(1 / 316)
    sigma = bound / math.sqrt(3)
    assert abs(w.mean()) < 3 * sigma / math.sqrt(len(w))
