"""Disentangled, language-focused multimodal sentiment regression on numpy."""

from .config import RunConfig
from .data import Dataset, Sample, gen_synthetic, load_dataset, save_dataset
from .metrics import MetricReport, compute_metrics
from .model import DLFModel
from .train import evaluate, train

__all__ = [
    "DLFModel",
    "Dataset",
    "MetricReport",
    "RunConfig",
    "Sample",
    "compute_metrics",
    "evaluate",
    "gen_synthetic",
    "load_dataset",
    "save_dataset",
    "train",
]
__version__ = "0.1.0"
