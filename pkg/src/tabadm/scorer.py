"""Anomaly scores: total denoising error over all timesteps under one fixed noise matrix."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .diffusion import sample_loss
from .errors import ShapeError
from .model import forward, time_vector
from .ndcore import Rng


@dataclass
class ScoreRun:
    scores: np.ndarray
    E: np.ndarray
    seed: int
    fresh_noise: bool = False


class _Prepared:
    """Per-checkpoint constants shared by every sample of a run."""

    def __init__(self, ckpt):
        self.params = ckpt.params
        self.sched = ckpt.schedule
        self.d = ckpt.params.W_in.shape[1]
        self.ts = np.arange(1, self.sched.T + 1)
        self.t_vec = time_vector(self.params, self.ts, ckpt.params.W_t1.shape[1])[0]
        self.a = np.sqrt(self.sched.alpha_bar)[:, None]
        self.b = np.sqrt(1.0 - self.sched.alpha_bar)[:, None]
        self.slope = getattr(ckpt.model_config, "leaky_slope", 0.2)

    def score(self, x0, E):
        x_all = self.a * x0 + self.b * E
        eps_hat, _ = forward(self.params, x_all, self.ts, slope=self.slope, t_vec=self.t_vec)
        return float(np.sum(sample_loss(E, eps_hat)))


def _check(prep, x0, E):
    if x0.shape[-1] != prep.d:
        raise ShapeError(f"sample has {x0.shape[-1]} features, checkpoint expects {prep.d}")
    if E.shape != (prep.sched.T, prep.d):
        raise ShapeError(f"noise matrix must be ({prep.sched.T}, {prep.d}), got {E.shape}")


def score_sample(ckpt, x0, E):
    """Score one normalized sample against noise matrix ``E`` (T x d)."""
    x0 = np.asarray(x0, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    prep = _Prepared(ckpt)
    _check(prep, x0, E)
    return prep.score(x0, E)


def score_set(ckpt, X, seed, jobs=1, fresh_noise=False):
    """Score every row of the normalized matrix ``X``.

    ``E`` is drawn once from ``seed`` and reused for every row.  With
    ``fresh_noise`` each row instead gets its own ``T x d`` draw, taken from the
    same stream in row order (``E`` then holds the first row's matrix).  Each row
    is evaluated as one fixed-shape ``T x d`` batch, so results do not depend on
    the other rows, their order, or ``jobs``.
    """
    X = np.asarray(X, dtype=np.float64)
    prep = _Prepared(ckpt)
    if X.ndim != 2 or X.shape[1] != prep.d:
        raise ShapeError(f"test data must have shape (k, {prep.d}), got {X.shape}")
    rng = Rng(seed)
    T, d = prep.sched.T, prep.d
    k = X.shape[0]
    if fresh_noise:
        noises = [rng.gaussian(T, d) for _ in range(k)]
        E = noises[0] if noises else np.zeros((T, d))
    else:
        E = rng.gaussian(T, d)
        noises = [E] * k

    def one(i):
        return prep.score(X[i], noises[i])

    if jobs > 1 and k > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(one, range(k)))
    else:
        scores = [one(i) for i in range(k)]
    return ScoreRun(np.array(scores, dtype=np.float64), E, int(seed), fresh_noise)
