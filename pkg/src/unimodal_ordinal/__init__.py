"""Unimodal Poisson and binomial probability heads for ordinal classification."""

from .heads import HeadConfig, head_backward, head_forward, tempered_softmax
from .kernels import backend
from .losses import LossKind, cross_entropy, squared_emd, squashed_regression
from .metrics import (
    MetricsReport,
    PredictionRule,
    confusion_matrix,
    evaluate,
    is_unimodal,
    quadratic_weighted_kappa,
)

__version__ = "0.1.0"

__all__ = [
    "HeadConfig",
    "LossKind",
    "MetricsReport",
    "PredictionRule",
    "backend",
    "confusion_matrix",
    "cross_entropy",
    "evaluate",
    "head_backward",
    "head_forward",
    "is_unimodal",
    "quadratic_weighted_kappa",
    "squared_emd",
    "squashed_regression",
    "tempered_softmax",
]
