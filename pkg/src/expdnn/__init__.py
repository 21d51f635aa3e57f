"""Explainable deep neural networks with per-input importance weights."""

from .data import CsvSchema, Dataset, builtin_dataset, load_csv, one_hot, select_features
from .experiment import (
    CASE_IDS,
    ExperimentConfig,
    ImportanceReport,
    explain,
    grad_check,
    run_case,
    train,
)
from .network import (
    ActivationKind,
    ExpDnnParams,
    LossKind,
    NetworkConfig,
    backward,
    compute_loss,
    forward,
    init_params,
)
from .optim import NadamHyper, NadamState, nadam_step

__version__ = "0.1.0"
