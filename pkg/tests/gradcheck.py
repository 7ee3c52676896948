"""Finite-difference check of full network gradients."""

from dataclasses import replace

import numpy as np

from unimodal_ordinal import network as N

from .conftest import FD_STEP, rel_err


def jitter_biases(model, rng, scale=0.1):
    """Small random biases so no ReLU pre-activation sits exactly on the kink.

    With zero biases a row whose previous layer is fully inactive feeds an
    exact 0 forward, where central differences straddle the kink.
    """
    return replace(model, biases=[rng.normal(0.0, scale, size=b.shape) for b in model.biases])


def network_gradient_errors(model, X, y, loss, l2, step=FD_STEP):
    """Max relative error per parameter group: analytic vs central differences."""
    _, grads = N.backward(model, X, y, loss, l2)
    errors = {}
    for group in ("weights", "biases"):
        for li, analytic in enumerate(getattr(grads, group)):
            params = getattr(model, group)
            fd = np.empty_like(analytic)
            for idx in np.ndindex(analytic.shape):
                vals = []
                for sign in (1.0, -1.0):
                    p = [a.copy() for a in params]
                    p[li][idx] += sign * step
                    vals.append(N.objective(replace(model, **{group: p}), X, y, loss, l2))
                fd[idx] = (vals[0] - vals[1]) / (2 * step)
            errors[f"{group}[{li}]"] = float(np.max(rel_err(analytic, fd, floor=1e-6)))
    if model.learn_tau:
        up = N.objective(replace(model, tau_raw=model.tau_raw + step), X, y, loss, l2)
        down = N.objective(replace(model, tau_raw=model.tau_raw - step), X, y, loss, l2)
        errors["tau_raw"] = float(rel_err(grads.tau_raw, (up - down) / (2 * step), floor=1e-6))
    return errors
