"""sparseseq: self-supervised forecasting pre-training for classifying
sparse, imbalanced multivariate time series."""

__version__ = "0.1.0"

from .autodiff import Tensor, backward, grad_check, no_grad
from .classify import Hyperparams, TrainPlan, TrainedModel, train_classifier
from .data import TimeSeriesDataset, load_dataset, save_dataset
from .encoders import EncoderConfig, impute_view
from .experiments import GridSpec, ResultsTable, run_grid, sweep_shift
from .metrics import auprc, auroc, f1_scores
from .pretrain import PretrainConfig, pretrain
from .synthetic import SyntheticParams, build_benchmark

__all__ = [
    "Tensor", "backward", "grad_check", "no_grad",
    "Hyperparams", "TrainPlan", "TrainedModel", "train_classifier",
    "TimeSeriesDataset", "load_dataset", "save_dataset",
    "EncoderConfig", "impute_view",
    "GridSpec", "ResultsTable", "run_grid", "sweep_shift",
    "auprc", "auroc", "f1_scores",
    "PretrainConfig", "pretrain",
    "SyntheticParams", "build_benchmark",
]
