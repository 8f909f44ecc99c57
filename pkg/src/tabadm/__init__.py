"""Unsupervised tabular anomaly detection with a denoising-diffusion density model."""

from .data import Dataset, Normalizer, build_contaminated, fit_normalizer, load_csv, stratified_split
from .diffusion import DiffusionSchedule, linear_schedule, noise, sample_loss
from .evalkit import aucroc, average_precision, hbos_score, knn_score, rank_by_percentile
from .model import ModelConfig, ModelParams
from .ndcore import Rng
from .scorer import score_set
from .trainer import Checkpoint, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Checkpoint", "Dataset", "DiffusionSchedule", "ModelConfig", "ModelParams", "Normalizer",
    "Rng", "TrainConfig", "aucroc", "average_precision", "build_contaminated", "fit_normalizer",
    "hbos_score", "knn_score", "linear_schedule", "load_csv", "noise", "rank_by_percentile",
    "sample_loss", "score_set", "stratified_split", "train",
]
