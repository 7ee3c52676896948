"""Unimodal probability heads.

A head turns one scalar network output into a distribution over K ordered
classes.  The scalar is plugged into the log-PMF of a Poisson (rate) or a
binomial with K-1 trials (success probability), giving one score per class,
and the scores go through a softmax with temperature tau:

    mass[j] = exp(h[j] / tau) / sum_i exp(h[i] / tau)

Because h is the log of a unimodal PMF, the result is unimodal for every
tau > 0, and at tau = 1 it is exactly the PMF renormalised over 0..K-1.
"""

from dataclasses import dataclass
from functools import cache

import numpy as np

from . import kernels
from .errors import DomainError

POISSON = "poisson"
BINOMIAL = "binomial"
KINDS = (POISSON, BINOMIAL)

BINOMIAL_EPS = 1e-6

_KIND_CODE = {POISSON: kernels.POISSON, BINOMIAL: kernels.BINOMIAL}


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class HeadConfig:
    """Head kind, class count and temperature.

    With ``learn_tau=False`` the temperature is ``tau``.  With
    ``learn_tau=True`` the temperature is ``sigmoid(tau_raw)`` and ``tau`` is
    ignored, so it always lies in (0, 1).
    """

    kind: str
    num_classes: int
    tau: float = 1.0
    learn_tau: bool = False
    tau_raw: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"head kind must be one of {KINDS}, got {self.kind!r}")
        if int(self.num_classes) != self.num_classes or self.num_classes < 2:
            raise ValueError(f"num_classes must be an integer >= 2, got {self.num_classes!r}")
        if not self.learn_tau and not (np.isfinite(self.tau) and self.tau > 0):
            raise DomainError(f"fixed temperature must be positive, got {self.tau!r}")
        if self.learn_tau and not np.isfinite(self.tau_raw):
            raise DomainError(f"tau_raw must be finite, got {self.tau_raw!r}")

    @property
    def temperature(self) -> float:
        return float(sigmoid(self.tau_raw)) if self.learn_tau else float(self.tau)


@cache
def _log_factorial_table(K: int) -> np.ndarray:
    table = np.zeros(K)
    if K > 2:
        table[2:] = np.cumsum(np.log(np.arange(2, K, dtype=np.float64)))
    table.setflags(write=False)
    return table


def log_factorial_table(K: int) -> np.ndarray:
    """``[log(0!), ..., log((K-1)!)]`` as an exact running sum of logs."""
    return _log_factorial_table(int(K))


def log_factorial(j: int) -> float:
    if int(j) != j or j < 0:
        raise DomainError(f"log_factorial needs a nonnegative integer, got {j!r}")
    return float(log_factorial_table(int(j) + 1)[int(j)])


def poisson_log_pmf(j: int, lam: float) -> float:
    if not (np.isfinite(lam) and lam > 0):
        raise DomainError(f"Poisson rate must be positive and finite, got {lam!r}")
    if int(j) != j or j < 0:
        raise DomainError(f"class index must be a nonnegative integer, got {j!r}")
    return j * np.log(lam) - lam - log_factorial(j)


def _clamp_p(p):
    return np.clip(p, BINOMIAL_EPS, 1.0 - BINOMIAL_EPS)


def binomial_log_pmf(j: int, p: float, K: int) -> float:
    if int(j) != j or not 0 <= j <= K - 1:
        raise DomainError(f"class index {j!r} outside [0, {K - 1}]")
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"success probability must lie in [0, 1], got {p!r}")
    p = float(_clamp_p(p))
    lf = log_factorial_table(K)
    n = K - 1
    return (lf[n] - lf[j] - lf[n - j]) + j * np.log(p) + (n - j) * np.log1p(-p)


def tempered_softmax(h, tau: float) -> np.ndarray:
    """Max-shifted softmax of ``h / tau`` along the last axis."""
    h = np.asarray(h, dtype=np.float64)
    if not (np.isfinite(tau) and tau > 0):
        raise DomainError(f"temperature must be positive, got {tau!r}")
    if not np.all(np.isfinite(h)):
        raise DomainError("softmax input contains non-finite entries")
    rows = np.ascontiguousarray(np.atleast_2d(h))
    out = kernels.tempered_softmax_rows(rows, float(tau))
    return out[0] if h.ndim == 1 else out


def _check_scalar(f: np.ndarray, kind: str) -> np.ndarray:
    if not np.all(np.isfinite(f)):
        raise DomainError("head input contains non-finite values")
    if kind == POISSON:
        if np.any(f <= 0):
            raise DomainError("Poisson head needs f > 0 (apply softplus first)")
        return f
    if np.any((f < 0) | (f > 1)):
        raise DomainError("binomial head needs f in [0, 1] (apply sigmoid first)")
    return _clamp_p(f)


def head_logits(f, cfg: HeadConfig) -> np.ndarray:
    """Class scores h, shape (K,) for scalar f or (N, K) for a vector."""
    f = np.asarray(f, dtype=np.float64)
    fv = np.ascontiguousarray(_check_scalar(np.atleast_1d(f), cfg.kind))
    h = kernels.head_logits(fv, log_factorial_table(cfg.num_classes), _KIND_CODE[cfg.kind])
    return h[0] if f.ndim == 0 else h


def head_forward(f, cfg: HeadConfig) -> np.ndarray:
    """Probability vector(s) for activated scalar output(s) ``f``."""
    h = np.atleast_2d(head_logits(f, cfg))
    mass = kernels.tempered_softmax_rows(h, cfg.temperature)
    return mass[0] if np.ndim(f) == 0 else mass


def head_backward_batch(f, cfg: HeadConfig, upstream):
    """Gradients of ``sum(upstream * head_forward(f))`` for a batch.

    Returns ``(d_f, d_tau_raw)`` where ``d_f`` has one entry per row and
    ``d_tau_raw`` is the sum over rows, or None for a fixed temperature.
    Binomial inputs outside the clamp band get zero gradient.
    """
    f = np.ascontiguousarray(np.atleast_1d(np.asarray(f, dtype=np.float64)))
    upstream = np.ascontiguousarray(np.atleast_2d(np.asarray(upstream, dtype=np.float64)))
    fc = np.ascontiguousarray(_check_scalar(f, cfg.kind))
    code = _KIND_CODE[cfg.kind]
    tau = cfg.temperature
    h = kernels.head_logits(fc, log_factorial_table(cfg.num_classes), code)
    mass = kernels.tempered_softmax_rows(h, tau)
    d_f, d_tau = kernels.head_backward_rows(fc, h, mass, upstream, tau, code)
    if cfg.kind == BINOMIAL:
        d_f = np.where(fc == f, d_f, 0.0)
    if not cfg.learn_tau:
        return d_f, None
    return d_f, float(d_tau.sum() * tau * (1.0 - tau))


def head_backward(f: float, cfg: HeadConfig, upstream):
    """Scalar version of :func:`head_backward_batch`."""
    d_f, d_raw = head_backward_batch(np.array([f], dtype=np.float64), cfg, np.asarray(upstream)[None, :])
    return float(d_f[0]), d_raw
