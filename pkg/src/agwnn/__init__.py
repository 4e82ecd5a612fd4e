"""Geographically weighted neural network regression.

Estimators follow the scikit-learn fit/predict protocol, with the sample
coordinates passed alongside the covariates.
"""

from .dataset import SpatialDataset
from .exceptions import (
    AgwnnError,
    ConfigError,
    DataError,
    DivergenceError,
    FitError,
    InputError,
    InvalidKernelError,
    LocalSingularityError,
    ModeError,
    NoFeasibleBandwidthError,
    NumericOverflowError,
    OversmoothingError,
    RankDeficiencyError,
    ShapeError,
    UsageError,
)
from .geometry import KernelSpec, distance, kernel_weight
from .io import load_model, read_dataset, save_model, write_dataset
from .linear import GWRRegressor, MLRRegressor, gwr_fit, ols_fit, optimize_bandwidth
from .metrics import MetricSet, compute_metrics
from .model import AGWNNRegressor, AgwnnModel, extract_coefficients, forward, train_agwnn
from .neural import ANNRegressor, NAdam, TrainConfig
from .synthetic import GridSpec, gen_dataset, run_benchmark, sample_size_sweep

__version__ = "0.1.0"

__all__ = [
    "AGWNNRegressor", "ANNRegressor", "AgwnnError", "AgwnnModel", "ConfigError", "DataError",
    "DivergenceError", "FitError", "GWRRegressor", "GridSpec", "InputError", "InvalidKernelError",
    "KernelSpec", "LocalSingularityError", "MLRRegressor", "MetricSet", "ModeError", "NAdam",
    "NoFeasibleBandwidthError", "NumericOverflowError", "OversmoothingError", "RankDeficiencyError",
    "ShapeError", "SpatialDataset", "TrainConfig", "UsageError", "compute_metrics", "distance",
    "extract_coefficients", "forward", "gen_dataset", "gwr_fit", "kernel_weight", "load_model",
    "ols_fit", "optimize_bandwidth", "read_dataset", "run_benchmark", "sample_size_sweep",
    "save_model", "train_agwnn", "write_dataset",
]
