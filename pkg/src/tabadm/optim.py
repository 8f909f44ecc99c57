"""Parameter updates that consume weight gradients in factored ``upstream.T @ inputs`` form.

Materializing a dense gradient for every weight costs a full extra pass over
memory, so both optimizers here fold the outer product into the update itself.
"""

import numpy as np
from numba import njit
from scipy.linalg import blas

from .errors import ConfigError

OPTIMIZERS = ("adamw", "adam", "sgd")


class SGD:
    """theta <- theta - lr * (grad + wd * theta)."""

    def __init__(self, params, lr, weight_decay=0.0):
        self.lr = lr
        self.weight_decay = weight_decay
        self.step_count = 0

    def update(self, params, factors, biases):
        self.step_count += 1
        lr = self.lr
        decay = 1.0 - lr * self.weight_decay
        for name, (up, inp) in factors.items():
            W = getattr(params, name)
            # W.T is Fortran-contiguous, so dgemm writes W in place:
            # W.T <- decay * W.T - lr * inp.T @ up
            out = blas.dgemm(alpha=-lr, a=inp.T, b=up, beta=decay, c=W.T, overwrite_c=True)
            if not np.shares_memory(out, W):
                setattr(params, name, np.ascontiguousarray(out.T))
        for name, g in biases.items():
            b = getattr(params, name)
            b *= decay
            b -= lr * g


@njit(cache=True, error_model="numpy")
def _adam_row(theta, g, m, v, lr_t, b1, b2, eps, sqrt_bc2, decay, l2):
    for j in range(theta.shape[0]):
        gj = g[j] + l2 * theta[j]
        mj = b1 * m[j] + (1.0 - b1) * gj
        vj = b2 * v[j] + (1.0 - b2) * gj * gj
        m[j] = mj
        v[j] = vj
        theta[j] = decay * theta[j] - lr_t * mj / (np.sqrt(vj) / sqrt_bc2 + eps)


@njit(cache=True, error_model="numpy")
def _adam_outer(W, up, inp, m, v, row, lr_t, b1, b2, eps, sqrt_bc2, decay, l2):
    n_out, n_in = W.shape
    batch = up.shape[0]
    for i in range(n_out):
        row[:] = 0.0
        for b in range(batch):
            c = up[b, i]
            if c != 0.0:
                for j in range(n_in):
                    row[j] += c * inp[b, j]
        _adam_row(W[i], row, m[i], v[i], lr_t, b1, b2, eps, sqrt_bc2, decay, l2)


class Adam:
    """Adam with bias correction.

    ``decoupled=True`` shrinks the weights by ``1 - lr * wd`` outside the
    adaptive step (AdamW); otherwise ``wd * theta`` is added to the gradient.
    """

    def __init__(self, params, lr, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8,
                 decoupled=True):
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.decoupled = decoupled
        self.step_count = 0
        self.m = {name: np.zeros_like(a) for name, a in params.items()}
        self.v = {name: np.zeros_like(a) for name, a in params.items()}
        width = max(a.shape[-1] for _, a in params.items())
        self._row = np.empty(width)

    def update(self, params, factors, biases):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.b1 ** t
        sqrt_bc2 = np.sqrt(1.0 - self.b2 ** t)
        lr_t = self.lr / bc1
        if self.decoupled:
            decay, l2 = 1.0 - self.lr * self.weight_decay, 0.0
        else:
            decay, l2 = 1.0, self.weight_decay
        for name, (up, inp) in factors.items():
            W = getattr(params, name)
            _adam_outer(W, np.ascontiguousarray(up), np.ascontiguousarray(inp),
                        self.m[name], self.v[name], self._row[:W.shape[1]],
                        lr_t, self.b1, self.b2, self.eps, sqrt_bc2, decay, l2)
        for name, g in biases.items():
            _adam_row(getattr(params, name), np.ascontiguousarray(g), self.m[name],
                      self.v[name], lr_t, self.b1, self.b2, self.eps, sqrt_bc2, decay, l2)


def make_optimizer(name, params, lr, weight_decay, betas=(0.9, 0.999), eps=1e-8):
    if name == "sgd":
        return SGD(params, lr, weight_decay)
    if name in ("adam", "adamw"):
        return Adam(params, lr, weight_decay, betas, eps, decoupled=name == "adamw")
    raise ConfigError(f"unknown optimizer {name!r}; choose from {OPTIMIZERS}")
