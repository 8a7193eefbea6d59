"""Shared helpers: canned epoch streams and hand-built models."""

import numpy as np

from rtesim.model import AnalyticHooks, RteModel
from rtesim.poisson import PoissonPath

SENTINEL = 1e18


def fixed_path(epochs):
    """PoissonPath with a prescribed epoch list (queries must stay < 1e18)."""
    p = PoissonPath(0, 0, 0)
    p._epochs = [float(e) for e in epochs] + [SENTINEL]
    return p


def zero_rate_model(alpha=1.5, with_hooks=True):
    """Pure decay dx/dt = -alpha*x with one silent jump process."""
    hooks = None
    if with_hooks:
        hooks = AnalyticHooks(
            flow=lambda t, x: x * np.exp(-alpha * t),
            hazard_integral=(lambda t, x: 0.0,),
            hazard_inverse=(lambda delta, x: np.inf,),
            drift_integral=lambda t, x: x * np.expm1(-alpha * t),
        )
    return RteModel(1, lambda x: -alpha * x, (lambda x: 0.0 * x[..., 0],),
                    [[0.0]], lipschitz_f=alpha, analytic=hooks, name="decay")


def zero_drift_model(lam=2.0, eps=0.5):
    """No drift; constant-in-state jump rate lam with jump height eps."""
    hooks = AnalyticHooks(
        flow=lambda t, x: x + 0.0 * t,
        hazard_integral=(lambda t, x: lam * t,),
        hazard_inverse=(lambda delta, x: delta / lam,),
        drift_integral=lambda t, x: 0.0 * x + 0.0 * t,
    )
    return RteModel(1, lambda x: 0.0 * x, (lambda x: lam + 0.0 * x[..., 0],),
                    [[eps]], lipschitz_f=0.0, analytic=hooks, name="pure-jump")
