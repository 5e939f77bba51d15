"""Paired-comparison ranking with tie and covariance factor models."""

from .analysis import agglomerate, classical_mds, kendall_tau_b, kernel_pca, leaderboard
from .data import ComparisonDataset, DataError, DisconnectedError, parse_dataset, read_dataset, split, validate
from .estimation import FitOptions, FitReport, fit, load_model, nll, nll_gradient, normalize, param_count, save_model
from .evaluation import EvaluationReport, evaluate
from .models import Family, ModelConfig, ParameterSet, outcome_probabilities

__version__ = "0.1.0"

__all__ = [
    "agglomerate",
    "classical_mds",
    "kendall_tau_b",
    "kernel_pca",
    "leaderboard",
    "ComparisonDataset",
    "DataError",
    "DisconnectedError",
    "EvaluationReport",
    "Family",
    "FitOptions",
    "FitReport",
    "ModelConfig",
    "ParameterSet",
    "evaluate",
    "fit",
    "load_model",
    "nll",
    "nll_gradient",
    "normalize",
    "outcome_probabilities",
    "param_count",
    "parse_dataset",
    "read_dataset",
    "save_model",
    "split",
    "validate",
]
