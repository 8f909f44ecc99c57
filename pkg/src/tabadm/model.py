"""Noise-prediction network with a hand-written backward pass.

Layout of one forward pass (rows are samples, weights are stored ``(out, in)``)::

    emb   = time_embed(t)                       # (B or 1, D_t)
    a1    = emb @ W_t1.T + b_t1
    t_vec = silu(a1) @ W_t2.T + b_t2            # (B or 1, H)
    h     = x @ W_in.T + b_in                   # (B, H)
    z1    = h @ W_r1.T + b_r1 + t_vec
    r     = h + silu(z1) @ W_r2.T + b_r2        # residual block
    eps   = leaky_relu(r, 0.2) @ W_out.T + b_out

When ``t`` is a scalar the time path is evaluated once and broadcast over the
batch; its gradient is the row-sum of the per-sample contributions.
"""

from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError, ShapeError

LEAKY_SLOPE = 0.2


def hidden_width_for(d):
    """Fully connected width by input dimension (512 / 1024 / 2048)."""
    if d <= 100:
        return 512
    if d <= 1000:
        return 1024
    return 2048


@dataclass(frozen=True)
class ModelConfig:
    d: int
    H: int = 512
    D_t: int = 64
    leaky_slope: float = LEAKY_SLOPE

    def __post_init__(self):
        if self.d < 1 or self.H < 1:
            raise ConfigError(f"d and H must be positive (d={self.d}, H={self.H})")
        if self.D_t < 2 or self.D_t % 2:
            raise ConfigError(f"time embedding size must be even and >= 2, got {self.D_t}")

    @classmethod
    def for_dim(cls, d, H=None, D_t=64):
        return cls(d=d, H=hidden_width_for(d) if H is None else H, D_t=D_t)

    def to_dict(self):
        return asdict(self)


# (name, shape-from-config, fan_in) in initialization order
_WEIGHTS = (
    ("W_in", lambda c: (c.H, c.d)),
    ("W_t1", lambda c: (c.H, c.D_t)),
    ("W_t2", lambda c: (c.H, c.H)),
    ("W_r1", lambda c: (c.H, c.H)),
    ("W_r2", lambda c: (c.H, c.H)),
    ("W_out", lambda c: (c.d, c.H)),
)


@dataclass
class ModelParams:
    W_in: np.ndarray
    b_in: np.ndarray
    W_t1: np.ndarray
    b_t1: np.ndarray
    W_t2: np.ndarray
    b_t2: np.ndarray
    W_r1: np.ndarray
    b_r1: np.ndarray
    W_r2: np.ndarray
    b_r2: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray

    @classmethod
    def names(cls):
        return [f.name for f in fields(cls)]

    def items(self):
        return [(n, getattr(self, n)) for n in self.names()]

    def copy(self):
        return ModelParams(**{n: a.copy() for n, a in self.items()})

    @classmethod
    def zeros(cls, config):
        kw = {}
        for name, shape in _WEIGHTS:
            s = shape(config)
            kw[name] = np.zeros(s)
            kw["b" + name[1:]] = np.zeros(s[0])
        return cls(**kw)

    def check(self, config):
        ref = ModelParams.zeros(config)
        for name, arr in self.items():
            if arr.shape != getattr(ref, name).shape:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {getattr(ref, name).shape}")
            if not np.all(np.isfinite(arr)):
                raise ShapeError(f"{name} contains non-finite values")

    def n_params(self):
        return sum(a.size for _, a in self.items())


def init(config, rng):
    """Uniform(+-sqrt(1/fan_in)) weights, zero biases."""
    params = ModelParams.zeros(config)
    for name, shape in _WEIGHTS:
        out_dim, fan_in = shape(config)
        bound = np.sqrt(1.0 / fan_in)
        setattr(params, name, rng.uniform_range(-bound, bound, (out_dim, fan_in)))
    return params


def time_embed(t, D_t):
    """Sinusoidal embedding ``[sin(t w_j)] ++ [cos(t w_j)]``, ``w_j = 10000**(-j/(half-1))``.

    Scalar ``t`` gives a vector of length ``D_t``; an array gives one row per entry.
    """
    if D_t < 2 or D_t % 2:
        raise ConfigError(f"time embedding size must be even and >= 2, got {D_t}")
    half = D_t // 2
    if half == 1:
        freqs = np.ones(1)
    else:
        freqs = 10000.0 ** (-np.arange(half) / (half - 1))
    args = np.multiply.outer(np.asarray(t, dtype=np.float64), freqs)
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


def _sigmoid(z):
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def silu(z):
    return z * _sigmoid(z)


def silu_grad(z):
    s = _sigmoid(z)
    return s * (1.0 + z * (1.0 - s))


def leaky_relu(z, slope=LEAKY_SLOPE):
    return np.where(z >= 0, z, slope * z)


def leaky_relu_grad(z, slope=LEAKY_SLOPE):
    # the gate at exactly 0 takes the positive branch
    return np.where(z >= 0, 1.0, slope)


@dataclass
class Tape:
    """Activations recorded by :func:`forward` for :func:`backward`."""

    x: np.ndarray
    emb: np.ndarray
    a1: np.ndarray
    s1: np.ndarray
    h: np.ndarray
    z1: np.ndarray
    s2: np.ndarray
    r: np.ndarray
    g: np.ndarray
    shared_t: bool
    squeeze: bool
    slope: float


def time_vector(params, t, D_t):
    """Time-conditioning vector(s) and the intermediates that produce them."""
    emb = np.atleast_2d(time_embed(t, D_t))
    a1 = emb @ params.W_t1.T + params.b_t1
    s1 = silu(a1)
    return s1 @ params.W_t2.T + params.b_t2, emb, a1, s1


def forward(params, x_t, t, slope=LEAKY_SLOPE, t_vec=None):
    """Predict the noise in ``x_t``.

    Parameters
    ----------
    params : ModelParams
    x_t : array, shape (d,) or (B, d)
    t : int or array of shape (B,)
        1-based timestep(s).  A scalar is shared by the whole batch.
    t_vec : array, optional
        Precomputed output of :func:`time_vector` for ``t``.  Only valid for
        inference; the returned tape then lacks the time-path activations.

    Returns
    -------
    eps_hat : array shaped like ``x_t``
    tape : Tape
    """
    x = np.asarray(x_t, dtype=np.float64)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    d = params.W_in.shape[1]
    if x.shape[1] != d:
        raise ShapeError(f"input has {x.shape[1]} features, model expects {d}")
    shared_t = np.ndim(t) == 0
    if not shared_t and np.shape(t) != (x.shape[0],):
        raise ShapeError(f"t must be scalar or length {x.shape[0]}, got shape {np.shape(t)}")
    D_t = params.W_t1.shape[1]
    if t_vec is None:
        t_vec, emb, a1, s1 = time_vector(params, t, D_t)
    else:
        emb = a1 = s1 = None

    h = x @ params.W_in.T + params.b_in
    z1 = h @ params.W_r1.T + params.b_r1 + t_vec
    s2 = silu(z1)
    r = h + s2 @ params.W_r2.T + params.b_r2
    g = leaky_relu(r, slope)
    eps_hat = g @ params.W_out.T + params.b_out
    tape = Tape(x=x, emb=emb, a1=a1, s1=s1, h=h, z1=z1, s2=s2, r=r, g=g,
                shared_t=shared_t, squeeze=squeeze, slope=slope)
    return (eps_hat[0] if squeeze else eps_hat), tape


def backward_factors(params, tape, dL_deps_hat):
    """Reverse pass returning each weight gradient in factored form.

    Every weight gradient is ``upstream.T @ inputs``; this returns the pair
    ``(upstream, inputs)`` per weight name and the materialized bias gradients,
    so callers can fuse the outer product into a parameter update.
    """
    if tape.emb is None:
        raise ValueError("tape was recorded with a precomputed time vector; cannot backprop")
    g_out = np.atleast_2d(np.asarray(dL_deps_hat, dtype=np.float64))
    if g_out.shape != (tape.x.shape[0], params.W_out.shape[0]):
        raise ShapeError(f"upstream gradient shape {g_out.shape} does not match forward output")

    factors, biases = {}, {}
    factors["W_out"] = (g_out, tape.g)
    biases["b_out"] = g_out.sum(axis=0)

    d_r = (g_out @ params.W_out) * leaky_relu_grad(tape.r, tape.slope)
    factors["W_r2"] = (d_r, tape.s2)
    biases["b_r2"] = d_r.sum(axis=0)

    d_z1 = (d_r @ params.W_r2) * silu_grad(tape.z1)
    factors["W_r1"] = (d_z1, tape.h)
    biases["b_r1"] = d_z1.sum(axis=0)

    d_h = d_r + d_z1 @ params.W_r1
    factors["W_in"] = (d_h, tape.x)
    biases["b_in"] = d_h.sum(axis=0)

    d_tvec = d_z1.sum(axis=0, keepdims=True) if tape.shared_t else d_z1
    factors["W_t2"] = (d_tvec, tape.s1)
    biases["b_t2"] = d_tvec.sum(axis=0)

    d_a1 = (d_tvec @ params.W_t2) * silu_grad(tape.a1)
    factors["W_t1"] = (d_a1, tape.emb)
    biases["b_t1"] = d_a1.sum(axis=0)
    return factors, biases


def backward(params, tape, dL_deps_hat):
    """Gradients of a scalar loss w.r.t. every parameter, as a ModelParams."""
    factors, biases = backward_factors(params, tape, dL_deps_hat)
    grads = {name: up.T @ inp for name, (up, inp) in factors.items()}
    grads.update(biases)
    return ModelParams(**grads)
