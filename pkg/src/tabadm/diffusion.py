"""Linear noise schedule, forward noising and the simplified noise-prediction loss.

Timesteps are 1-based in every public function (``1 <= t <= T``); arrays are
stored 0-based, so ``alpha_bar[t - 1]`` is the value for timestep ``t``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

BETA_START = 1e-4
BETA_END = 0.02


@dataclass(frozen=True)
class DiffusionSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self):
        return len(self.beta)

    def check_t(self, t):
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise ShapeError(f"timestep out of range 1..{self.T}: {t}")

    def coefficients(self, t):
        """``(sqrt(alpha_bar_t), sqrt(1 - alpha_bar_t))`` for 1-based ``t``."""
        self.check_t(t)
        ab = self.alpha_bar[np.asarray(t) - 1]
        return np.sqrt(ab), np.sqrt(1.0 - ab)

    @classmethod
    def from_beta(cls, beta):
        beta = np.asarray(beta, dtype=np.float64)
        if beta.ndim != 1 or len(beta) < 1:
            raise ConfigError("beta must be a non-empty 1-D array")
        if np.any(beta <= 0) or np.any(beta >= 1):
            raise ConfigError("every beta must lie in (0, 1)")
        alpha = 1.0 - beta
        return cls(beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


def linear_schedule(T, beta_start=BETA_START, beta_end=BETA_END):
    """Linearly spaced betas from ``beta_start`` to ``beta_end`` inclusive.

    ``T == 1`` yields ``[beta_start]``.
    """
    if int(T) != T or T < 1:
        raise ConfigError(f"T must be a positive integer, got {T}")
    if T == 1:
        beta = np.array([beta_start], dtype=np.float64)
    else:
        beta = np.linspace(beta_start, beta_end, int(T), dtype=np.float64)
    return DiffusionSchedule.from_beta(beta)


def noise(x0, t, eps, sched):
    """Sample ``x_t`` from ``q(x_t | x_0)`` given explicit noise ``eps``.

    Works on a single vector or on rows of a matrix; ``t`` may be a scalar or an
    array broadcastable against the leading axis.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeError(f"x0 {x0.shape} and eps {eps.shape} differ in shape")
    a, b = sched.coefficients(t)
    if np.ndim(a):
        a = np.reshape(a, (-1,) + (1,) * (x0.ndim - 1))
        b = np.reshape(b, a.shape)
    return a * x0 + b * eps


def sample_loss(eps_true, eps_pred):
    """Mean squared error over the last axis (one value per sample)."""
    eps_true = np.asarray(eps_true, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    if eps_true.shape != eps_pred.shape:
        raise ShapeError(f"shape mismatch {eps_true.shape} vs {eps_pred.shape}")
    diff = eps_true - eps_pred
    out = np.mean(diff * diff, axis=-1)
    return float(out) if out.ndim == 0 else out
