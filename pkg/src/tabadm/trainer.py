"""Training of the noise predictor with per-batch rejection of high-loss samples."""

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Normalizer
from .diffusion import BETA_END, BETA_START, DiffusionSchedule, linear_schedule, sample_loss
from .errors import ConfigError, TrainingDivergedError
from .model import ModelConfig, ModelParams, backward_factors, forward, init
from .ndcore import Rng
from .optim import OPTIMIZERS, make_optimizer

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


def learning_rate_for(d):
    return 1e-3 if d <= 100 else 2e-4


@dataclass
class TrainConfig:
    batch_size: int = 8
    reject: int = 1
    steps: int = 50_000
    learning_rate: float = None
    weight_decay: float = 1e-4
    T: int = 100
    beta_start: float = BETA_START
    beta_end: float = BETA_END
    seed: int = 0
    eval_every: int = None
    eval_seed: int = 0
    optimizer: str = "adamw"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    log_every: int = 0

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not 0 <= self.reject < self.batch_size:
            raise ConfigError(
                f"rejection count m={self.reject} must satisfy 0 <= m < k={self.batch_size}"
            )
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.learning_rate is not None and self.learning_rate < 0:
            raise ConfigError(f"learning rate must be non-negative, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError("weight decay must be non-negative")
        if self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; choose from {OPTIMIZERS}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ConfigError("Adam betas must lie in [0, 1) and eps must be positive")
        if self.eval_every is not None and self.eval_every < 1:
            raise ConfigError("eval_every must be positive")
        return self

    def resolved(self, d):
        """Copy with the dimension-dependent learning rate filled in."""
        lr = learning_rate_for(d) if self.learning_rate is None else self.learning_rate
        return TrainConfig(**{**asdict(self), "learning_rate": lr}).validate()

    def to_dict(self):
        return asdict(self)


def reject(losses, m):
    """Indices (ascending) of the ``k - m`` smallest losses.

    Ties go to the lower batch index, so among equal losses the later ones are
    dropped first.
    """
    losses = np.asarray(losses, dtype=np.float64)
    k = len(losses)
    if k < 1 or not 0 <= m < k:
        raise ConfigError(f"rejection needs 0 <= m < k, got m={m}, k={k}")
    order = np.argsort(losses, kind="stable")
    return np.sort(order[: k - m])


@dataclass
class StepInfo:
    t: int
    losses: np.ndarray
    kept: np.ndarray
    loss: float


def make_optimizer_for(cfg, params):
    """Optimizer named by ``cfg`` (learning rate must already be resolved)."""
    return make_optimizer(cfg.optimizer, params, cfg.learning_rate, cfg.weight_decay,
                          (cfg.adam_beta1, cfg.adam_beta2), cfg.adam_eps)


def train_step(params, x0, rng, sched, cfg, step=0, optimizer=None):
    """One update on batch ``x0``; mutates and returns ``params``.

    Draw order: noise (``k x d`` Gaussians), then the shared timestep.  Without
    an ``optimizer`` a fresh one is built from ``cfg``, which for Adam means a
    first step from zero moments.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    k, d = x0.shape
    if not 0 <= cfg.reject < k:
        raise ConfigError(f"rejection count m={cfg.reject} must be < batch size {k}")
    eps = rng.gaussian(k, d)
    t = rng.integers(1, sched.T + 1)
    a, b = sched.coefficients(t)
    x_t = a * x0 + b * eps
    eps_hat, tape = forward(params, x_t, t)
    losses = sample_loss(eps, eps_hat)
    bad = np.flatnonzero(~np.isfinite(losses))
    if len(bad):
        raise TrainingDivergedError(step, int(t), int(bad[0]), float(losses[bad[0]]))
    kept = reject(losses, cfg.reject)
    n_keep = len(kept)
    upstream = np.zeros_like(eps_hat)
    upstream[kept] = (-2.0 / (d * n_keep)) * (eps[kept] - eps_hat[kept])
    factors, biases = backward_factors(params, tape, upstream)
    if optimizer is None:
        optimizer = make_optimizer_for(cfg, params)
    optimizer.update(params, factors, biases)
    return params, StepInfo(t=int(t), losses=losses, kept=kept, loss=float(losses[kept].mean()))


@dataclass
class Checkpoint:
    params: ModelParams
    model_config: ModelConfig
    schedule: DiffusionSchedule
    normalizer: Normalizer = None
    train_config: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def to_dict(self):
        return {
            "format_version": self.format_version,
            "model_config": self.model_config.to_dict(),
            "train_config": self.train_config,
            "schedule": {
                "beta": self.schedule.beta.tolist(),
                "alpha_bar": self.schedule.alpha_bar.tolist(),
            },
            "normalizer": None if self.normalizer is None else self.normalizer.to_dict(),
            "params": {name: arr.tolist() for name, arr in self.params.items()},
        }

    @classmethod
    def from_dict(cls, doc):
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise ConfigError(f"unsupported checkpoint format_version {version!r}")
        mc = ModelConfig(**doc["model_config"])
        beta = np.asarray(doc["schedule"]["beta"], dtype=np.float64)
        sched = DiffusionSchedule(
            beta=beta,
            alpha=1.0 - beta,
            alpha_bar=np.asarray(doc["schedule"]["alpha_bar"], dtype=np.float64),
        )
        params = ModelParams(**{
            name: np.ascontiguousarray(np.asarray(v, dtype=np.float64))
            for name, v in doc["params"].items()
        })
        params.check(mc)
        norm = None if doc.get("normalizer") is None else Normalizer.from_dict(doc["normalizer"])
        return cls(params, mc, sched, norm, doc.get("train_config", {}), version)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, allow_nan=False)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train(data, cfg, normalizer=None, model_config=None, validation=None, on_step=None):
    """Fit a noise predictor on normalized, unlabeled rows.

    Parameters
    ----------
    data : array, shape (n, d)
        Training rows already mapped to [-1, 1].  Labels never enter here.
    cfg : TrainConfig
    normalizer : Normalizer, optional
        Stored in the checkpoint so scoring can reuse the training map.
    model_config : ModelConfig, optional
        Defaults to the width policy for ``d``.
    validation : tuple (X, y), optional
        Normalized labeled rows scored every ``cfg.eval_every`` steps.
    on_step : callable, optional
        Called as ``on_step(step, info)`` after every update.

    Returns
    -------
    checkpoint : Checkpoint
    trace : list of dict
        ``{"step", "aucroc", "ap"}`` entries; empty unless evaluation is enabled.
    """
    from .evalkit import aucroc, average_precision
    from .scorer import score_set

    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ConfigError(f"training data must be a non-empty 2-D array, got shape {X.shape}")
    n, d = X.shape
    cfg = cfg.resolved(d)
    mc = model_config or ModelConfig.for_dim(d)
    if mc.d != d:
        raise ConfigError(f"model input dimension {mc.d} does not match data dimension {d}")
    sched = linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end)
    rng = Rng(cfg.seed)
    params = init(mc, rng)
    ckpt = Checkpoint(params, mc, sched, normalizer, cfg.to_dict())
    opt = make_optimizer_for(cfg, params)

    trace = []
    evaluate = cfg.eval_every is not None and validation is not None
    for step in range(1, cfg.steps + 1):
        idx = rng.integers(0, n, cfg.batch_size)
        _, info = train_step(params, X[idx], rng, sched, cfg, step=step, optimizer=opt)
        if on_step is not None:
            on_step(step, info)
        if cfg.log_every and step % cfg.log_every == 0:
            log.info("step %d/%d t=%d loss=%.6f", step, cfg.steps, info.t, info.loss)
        if evaluate and (step % cfg.eval_every == 0 or step == cfg.steps):
            Xv, yv = validation
            run = score_set(ckpt, Xv, cfg.eval_seed)
            trace.append({
                "step": step,
                "aucroc": aucroc(run.scores, yv),
                "ap": average_precision(run.scores, yv),
            })
            log.info("step %d eval aucroc=%.4f ap=%.4f", step, trace[-1]["aucroc"], trace[-1]["ap"])
    return ckpt, trace
