"""Ordinal evaluation: predictions, accuracy, top-k, quadratic weighted kappa.

Ties in mass always resolve toward the lower class index, both for argmax
and for top-k ranking, so ``top_k_accuracy(..., k=1)`` equals argmax
accuracy.  Top-k is computed from the mass ranking under either prediction
rule; the expectation rule has no ranking of its own.
"""

from dataclasses import asdict, dataclass, fields
from enum import Enum

import numpy as np

from .errors import DegenerateMarginalsError


class PredictionRule(str, Enum):
    ARGMAX = "argmax"
    EXPECTATION = "expectation"


def predict_argmax(p):
    p = np.asarray(p, dtype=np.float64)
    out = np.argmax(p, axis=-1)
    return int(out) if out.ndim == 0 else out


def _round_half_up(x, num_classes):
    c = np.clip(np.floor(x + 0.5), 0, num_classes - 1).astype(np.int64)
    return int(c) if c.ndim == 0 else c


def predict_expectation(p):
    """Returns ``(expectation, class)``; the class is the rounded expectation."""
    p = np.asarray(p, dtype=np.float64)
    K = p.shape[-1]
    e = p @ np.arange(K, dtype=np.float64)
    return (float(e) if np.ndim(e) == 0 else e), _round_half_up(e, K)


def predict(p, rule):
    if PredictionRule(rule) is PredictionRule.ARGMAX:
        return predict_argmax(p)
    return predict_expectation(p)[1]


def top_k_accuracy(scores, truths, k: int) -> float:
    """Fraction of rows whose truth ranks within the top ``k`` scores.

    A class outranks the truth if its score is larger, or equal with a
    lower index.
    """
    S = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    t = np.atleast_1d(np.asarray(truths)).astype(np.int64)
    if S.shape[0] == 0 or t.shape[0] == 0:
        raise ValueError("top_k_accuracy needs at least one example")
    if S.shape[0] != t.shape[0]:
        raise ValueError(f"{S.shape[0]} score rows but {t.shape[0]} truths")
    K = S.shape[1]
    if not 1 <= k <= K:
        raise ValueError(f"k must lie in [1, {K}], got {k}")
    truth_score = S[np.arange(len(t)), t][:, None]
    lower = np.arange(K)[None, :] < t[:, None]
    rank = np.sum((S > truth_score) | ((S == truth_score) & lower), axis=1)
    return float(np.mean(rank < k))


def confusion_matrix(truths, preds, num_classes: int) -> np.ndarray:
    t = np.asarray(truths, dtype=np.int64)
    p = np.asarray(preds, dtype=np.int64)
    if t.shape != p.shape or t.size == 0:
        raise ValueError("truths and predictions must be non-empty and of equal length")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def quadratic_weights(num_classes: int) -> np.ndarray:
    i = np.arange(num_classes, dtype=np.float64)
    return (i[:, None] - i[None, :]) ** 2 / (num_classes - 1) ** 2


def quadratic_weighted_kappa(cm, weights=None) -> float:
    """Weighted kappa, ``1 - sum(w * O) / sum(w * E)``.

    ``weights`` defaults to quadratic; any K x K cost matrix may be passed.
    Raises DegenerateMarginalsError when the expected weighted disagreement
    is zero (truth and prediction marginals concentrated on one class).
    """
    cm = np.asarray(cm, dtype=np.float64)
    K = cm.shape[0]
    if cm.shape != (K, K):
        raise ValueError(f"confusion matrix must be square, got {cm.shape}")
    n = cm.sum()
    if n <= 0:
        raise ValueError("confusion matrix is empty")
    w = quadratic_weights(K) if weights is None else np.asarray(weights, dtype=np.float64)
    O = cm / n
    E = np.outer(O.sum(axis=1), O.sum(axis=0))
    den = np.sum(w * E)
    if den == 0:
        raise DegenerateMarginalsError("kappa undefined: zero expected weighted disagreement")
    return float(1.0 - np.sum(w * O) / den)


def entropy(p) -> np.ndarray | float:
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    out = terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def is_unimodal(p, tol: float = 1e-12) -> bool:
    """Non-decreasing up to the global max, non-increasing after (slack ``tol``)."""
    p = np.asarray(p, dtype=np.float64)
    m = int(np.argmax(p))
    d = np.diff(p)
    return bool(np.all(d[:m] >= -tol) and np.all(d[m:] <= tol))


def unimodal_flags(P, tol: float = 1e-12) -> np.ndarray:
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    m = np.argmax(P, axis=1)[:, None]
    d = np.diff(P, axis=1)
    idx = np.arange(P.shape[1] - 1)[None, :]
    ok = np.where(idx < m, d >= -tol, d <= tol)
    return ok.all(axis=1)


@dataclass
class MetricsReport:
    rule: str
    n: int
    accuracy: float
    qwk: float
    top1: float
    top2: float
    top3: float
    frac_unimodal: float
    mean_entropy: float

    @staticmethod
    def csv_header() -> str:
        return ",".join(f.name for f in fields(MetricsReport))

    def to_csv_row(self) -> str:
        return ",".join(v if isinstance(v, str) else str(v) if isinstance(v, int) else repr(float(v)) for v in asdict(self).values())


def _top_ks(scores, truths):
    K = np.shape(scores)[1]
    return [top_k_accuracy(scores, truths, min(k, K)) for k in (1, 2, 3)]


def evaluate(probs, truths, rule=PredictionRule.ARGMAX) -> MetricsReport:
    P = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    t = np.atleast_1d(np.asarray(truths)).astype(np.int64)
    if P.shape[0] == 0:
        raise ValueError("evaluate needs at least one example")
    if P.shape[0] != t.shape[0]:
        raise ValueError(f"{P.shape[0]} predictions but {t.shape[0]} truths")
    K = P.shape[1]
    if np.any((t < 0) | (t >= K)):
        raise ValueError(f"truth labels outside [0, {K - 1}]")
    rule = PredictionRule(rule)
    pred = predict(P, rule)
    top1, top2, top3 = _top_ks(P, t)
    return MetricsReport(
        rule=rule.value,
        n=len(t),
        accuracy=float(np.mean(pred == t)),
        qwk=quadratic_weighted_kappa(confusion_matrix(t, pred, K)),
        top1=top1,
        top2=top2,
        top3=top3,
        frac_unimodal=float(np.mean(unimodal_flags(P))),
        mean_entropy=float(np.mean(entropy(P))),
    )


def regression_rank_scores(scores, num_classes: int) -> np.ndarray:
    """Rank classes by closeness to a real-valued score: ``-|c - s|``."""
    s = np.atleast_1d(np.asarray(scores, dtype=np.float64))
    return -np.abs(np.arange(num_classes)[None, :] - s[:, None])


def evaluate_regression(scores, truths, num_classes: int, rule=PredictionRule.ARGMAX) -> MetricsReport:
    """Metrics for a real-valued predictor on the class scale.

    Both rules round the score; top-k ranks classes by distance to it.
    Unimodality and entropy do not apply and are reported as NaN.
    """
    s = np.atleast_1d(np.asarray(scores, dtype=np.float64))
    t = np.atleast_1d(np.asarray(truths)).astype(np.int64)
    if s.shape[0] == 0:
        raise ValueError("evaluate needs at least one example")
    pred = _round_half_up(s, num_classes)
    top1, top2, top3 = _top_ks(regression_rank_scores(s, num_classes), t)
    return MetricsReport(
        rule=PredictionRule(rule).value,
        n=len(t),
        accuracy=float(np.mean(pred == t)),
        qwk=quadratic_weighted_kappa(confusion_matrix(t, pred, num_classes)),
        top1=top1,
        top2=top2,
        top3=top3,
        frac_unimodal=float("nan"),
        mean_entropy=float("nan"),
    )
