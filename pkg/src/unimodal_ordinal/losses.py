"""Training criteria and their analytic gradients.

Batched inputs (2-D ``pred``, 1-D ``target``) reduce by arithmetic mean, and
the batched gradients include the matching 1/N factor.
"""

from enum import Enum

import numpy as np

from . import kernels
from .heads import sigmoid

CE_FLOOR = 1e-12


class LossKind(str, Enum):
    CROSS_ENTROPY = "cross_entropy"
    SQUARED_EMD = "squared_emd"
    SQUASHED_REGRESSION = "squashed_regression"


def _as_batch(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target)
    single = pred.ndim == 1
    P = np.ascontiguousarray(np.atleast_2d(pred))
    t = np.atleast_1d(target).astype(np.int64)
    if t.shape[0] != P.shape[0]:
        raise ValueError(f"{P.shape[0]} predictions but {t.shape[0]} targets")
    if np.any((t < 0) | (t >= P.shape[1])):
        raise ValueError(f"target outside [0, {P.shape[1] - 1}]")
    return P, t, single


def cross_entropy(pred, target) -> float:
    P, t, _ = _as_batch(pred, target)
    picked = np.maximum(P[np.arange(len(t)), t], CE_FLOOR)
    return float(np.mean(-np.log(picked)))


def cross_entropy_grad(pred, target) -> np.ndarray:
    """-1/mass at the target (zero where the floor clamp is active)."""
    P, t, single = _as_batch(pred, target)
    rows = np.arange(len(t))
    picked = P[rows, t]
    G = np.zeros_like(P)
    G[rows, t] = np.where(picked > CE_FLOOR, -1.0 / np.maximum(picked, CE_FLOOR), 0.0)
    G /= len(t)
    return G[0] if single else G


def cumulative_mass(p) -> np.ndarray:
    return np.cumsum(np.asarray(p, dtype=np.float64), axis=-1)


def squared_emd_rows(pred, target) -> np.ndarray:
    P, t, _ = _as_batch(pred, target)
    return kernels.emd_rows(P, t)[0]


def squared_emd(pred, target) -> float:
    """(1/K) * sum_j (cmf(pred)[j] - cmf(onehot(target))[j])**2, batch-averaged."""
    return float(np.mean(squared_emd_rows(pred, target)))


def squared_emd_grad(pred, target) -> np.ndarray:
    P, t, single = _as_batch(pred, target)
    G = kernels.emd_rows(P, t)[1] / len(t)
    return G[0] if single else G


def _regression_parts(f, target, num_classes):
    f = np.atleast_1d(np.asarray(f, dtype=np.float64))
    t = np.atleast_1d(np.asarray(target)).astype(np.float64)
    if f.shape != t.shape:
        raise ValueError(f"{f.shape[0]} outputs but {t.shape[0]} targets")
    s = sigmoid(f)
    return f, t, s, (num_classes - 1) * s - t


def squashed_regression(f, target, num_classes: int) -> float:
    """((K-1) * sigmoid(f) - target)**2, batch-averaged."""
    _, _, _, r = _regression_parts(f, target, num_classes)
    return float(np.mean(r * r))


def squashed_regression_grad(f, target, num_classes: int):
    f_arr, _, s, r = _regression_parts(f, target, num_classes)
    g = 2.0 * r * (num_classes - 1) * s * (1.0 - s) / len(f_arr)
    return float(g[0]) if np.ndim(f) == 0 else g


def regression_predict(score, num_classes: int):
    """Round a squashed regression output to a class, halves up, clipped."""
    c = np.floor(np.asarray(score, dtype=np.float64) + 0.5)
    c = np.clip(c, 0, num_classes - 1).astype(np.int64)
    return int(c) if c.ndim == 0 else c


def loss_value(kind, output, target, num_classes: int | None = None) -> float:
    """Dispatch on ``kind``; ``output`` is mass for the distribution losses
    and the raw pre-squash scalar for regression."""
    kind = LossKind(kind)
    if kind is LossKind.CROSS_ENTROPY:
        return cross_entropy(output, target)
    if kind is LossKind.SQUARED_EMD:
        return squared_emd(output, target)
    return squashed_regression(output, target, num_classes)


def loss_backward(kind, output, target, num_classes: int | None = None):
    kind = LossKind(kind)
    if kind is LossKind.CROSS_ENTROPY:
        return cross_entropy_grad(output, target)
    if kind is LossKind.SQUARED_EMD:
        return squared_emd_grad(output, target)
    return squashed_regression_grad(output, target, num_classes)
