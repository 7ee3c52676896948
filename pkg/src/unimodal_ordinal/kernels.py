"""Batched numeric kernels for the heads and the EMD loss.

Every kernel exists twice: a vectorised numpy version (``*_np``) and a
loop version compiled with numba (``*_nb``).  The public names point at the
numba versions unless numba is missing or the environment variable
``UNIMODAL_ORDINAL_JIT`` is set to ``0``/``false``/``off``.  The flag is read
once, at import time.

Kind codes: ``POISSON = 0``, ``BINOMIAL = 1``.
"""

import os

import numpy as np

POISSON = 0
BINOMIAL = 1

JIT_ENV = "UNIMODAL_ORDINAL_JIT"


def _jit_requested():
    return os.environ.get(JIT_ENV, "1").strip().lower() not in {"0", "false", "no", "off"}


try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _jit_requested()


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------


def head_logits_np(f, log_fact, kind):
    """h[n, j] = log-PMF of class j given scalar f[n] (lambda or p)."""
    K = log_fact.shape[0]
    j = np.arange(K, dtype=np.float64)
    f = f[:, None]
    if kind == POISSON:
        return j * np.log(f) - f - log_fact
    n = K - 1
    log_comb = log_fact[n] - log_fact - log_fact[::-1]
    return log_comb + j * np.log(f) + (n - j) * np.log1p(-f)


def tempered_softmax_np(h, tau):
    z = (h - h.max(axis=1, keepdims=True)) / tau
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def head_backward_np(f, h, mass, upstream, tau, kind):
    """Per-row gradients of ``sum_j upstream[n, j] * mass[n, j]``.

    Returns ``(d_f, d_tau)``, both of shape (N,).
    """
    K = h.shape[1]
    j = np.arange(K, dtype=np.float64)
    g = mass * (upstream - (upstream * mass).sum(axis=1, keepdims=True))
    fc = f[:, None]
    if kind == POISSON:
        dh_df = j / fc - 1.0
    else:
        dh_df = j / fc - (K - 1 - j) / (1.0 - fc)
    d_f = (g * dh_df).sum(axis=1) / tau
    hs = h - h.max(axis=1, keepdims=True)
    d_tau = -(g * hs).sum(axis=1) / (tau * tau)
    return d_f, d_tau


def emd_rows_np(mass, labels):
    """Squared EMD (l=2) per row and its gradient with respect to mass."""
    _N, K = mass.shape
    cmf = np.cumsum(mass, axis=1)
    step = (np.arange(K)[None, :] >= labels[:, None]).astype(np.float64)
    diff = cmf - step
    loss = (diff * diff).sum(axis=1) / K
    grad = (2.0 / K) * np.cumsum(diff[:, ::-1], axis=1)[:, ::-1]
    return loss, grad


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def head_logits_nb(f, log_fact, kind):
        N = f.shape[0]
        K = log_fact.shape[0]
        n = K - 1
        out = np.empty((N, K))
        for r in range(N):
            x = f[r]
            lx = np.log(x)
            if kind == POISSON:
                for j in range(K):
                    out[r, j] = j * lx - x - log_fact[j]
            else:
                l1m = np.log1p(-x)
                for j in range(K):
                    out[r, j] = (log_fact[n] - log_fact[j] - log_fact[n - j]) + j * lx + (n - j) * l1m
        return out

    @njit(cache=True)
    def tempered_softmax_nb(h, tau):
        N, K = h.shape
        out = np.empty((N, K))
        for r in range(N):
            m = h[r, 0]
            for j in range(1, K):
                m = max(m, h[r, j])
            s = 0.0
            for j in range(K):
                e = np.exp((h[r, j] - m) / tau)
                out[r, j] = e
                s += e
            for j in range(K):
                out[r, j] /= s
        return out

    @njit(cache=True)
    def head_backward_nb(f, h, mass, upstream, tau, kind):
        N, K = h.shape
        d_f = np.empty(N)
        d_tau = np.empty(N)
        for r in range(N):
            ubar = 0.0
            m = h[r, 0]
            for j in range(K):
                ubar += upstream[r, j] * mass[r, j]
                m = max(m, h[r, j])
            x = f[r]
            acc_f = 0.0
            acc_t = 0.0
            for j in range(K):
                g = mass[r, j] * (upstream[r, j] - ubar)
                if kind == POISSON:
                    dh = j / x - 1.0
                else:
                    dh = j / x - (K - 1 - j) / (1.0 - x)
                acc_f += g * dh
                acc_t += g * (h[r, j] - m)
            d_f[r] = acc_f / tau
            d_tau[r] = -acc_t / (tau * tau)
        return d_f, d_tau

    @njit(cache=True)
    def emd_rows_nb(mass, labels):
        N, K = mass.shape
        loss = np.empty(N)
        grad = np.empty((N, K))
        diff = np.empty(K)
        for r in range(N):
            c = 0.0
            s = 0.0
            for j in range(K):
                c += mass[r, j]
                d = c - (1.0 if j >= labels[r] else 0.0)
                diff[j] = d
                s += d * d
            loss[r] = s / K
            acc = 0.0
            for j in range(K - 1, -1, -1):
                acc += diff[j]
                grad[r, j] = 2.0 * acc / K
        return loss, grad


if USE_NUMBA:
    head_logits = head_logits_nb
    tempered_softmax_rows = tempered_softmax_nb
    head_backward_rows = head_backward_nb
    emd_rows = emd_rows_nb
else:
    head_logits = head_logits_np
    tempered_softmax_rows = tempered_softmax_np
    head_backward_rows = head_backward_np
    emd_rows = emd_rows_np


def backend():
    """Name of the active kernel backend: ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"
