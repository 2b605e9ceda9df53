"""Scalar toy saddle problems with closed-form everything.

Both instances use A = 1 and g the indicator of [-1, 1], so the dual
update is a clamp:

* kind "zero": f = 0.  L(x, y) = x y - ind(y); every step is exact and
  the first iterates from (x0, y0) = (1, 0) with tau = lam = 1/2 are
  (y1, x1, ybar1) = (0.5, 0.75, 0.375).
* kind "abs": f(x) = |x| with saddle point (0, 0) and ergodic gap
  L(xhat, 0) - L(0, yhat) = |xhat|, the instance used for rate studies.

With ``inexact=True`` the oracles return deliberately perturbed points
whose closed-form type-2 epsilon sits just below the requested
tolerance, exercising the worst case the error ledgers budget for.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .operators import LinearMap, ScaledIdentityMetric
from .pdcore import PdhgSpec, SaddleProblem
from .proxlib import ProxProblem, exact_prox_separable, inexact_prox

# Fraction of the scheduled tolerance the perturbed oracles aim for;
# strictly below 1 so the achieved epsilon never exceeds the budget.
INEXACT_FRACTION = 0.9


def make_toy(kind: str = "abs", inexact: bool = False) -> SaddleProblem:
    """One-dimensional saddle problem; see the module docstring."""
    if kind not in ("zero", "abs"):
        raise ConfigurationError(f"unknown toy kind {kind!r}")
    ident = ScaledIdentityMetric(1)
    A = LinearMap.identity(1)
    # Alternate the perturbation direction call-by-call so ergodic
    # averaging cannot cancel the injected error by symmetry.
    flip = {"f": 1.0, "g": 1.0}

    def g_prox(center, tau, metric, tol):
        P = ProxProblem(tag="inf_ball", tau=tau, metric=metric,
                        center=np.asarray(center, dtype=float), radius=1.0)
        if inexact and tol > 0.0:
            flip["g"] *= -1.0
            z, achieved = inexact_prox(P, INEXACT_FRACTION * tol,
                                       direction=flip["g"])
            return z, achieved
        return exact_prox_separable(P), 0.0

    if kind == "zero":
        def f_prox(center, lam, metric, tol):
            # prox of the zero function is the identity, at any tolerance
            return np.asarray(center, dtype=float).copy(), 0.0

        def f_eval(x):
            return 0.0
    else:
        def f_prox(center, lam, metric, tol):
            P = ProxProblem(tag="l1", tau=lam, metric=metric,
                            center=np.asarray(center, dtype=float),
                            weight=1.0)
            if inexact and tol > 0.0:
                flip["f"] *= -1.0
                z, achieved = inexact_prox(P, INEXACT_FRACTION * tol,
                                           direction=flip["f"])
                return z, achieved
            return exact_prox_separable(P), 0.0

        def f_eval(x):
            return float(np.sum(np.abs(x)))

    def g_eval(y):
        return 0.0 if np.max(np.abs(y), initial=0.0) <= 1.0 + 1e-9 else np.inf

    # F(x) = f(x) + sup_{|y|<=1} <x, y> = f(x) + ||x||_1
    def objective(x):
        return f_eval(x) + float(np.sum(np.abs(x)))

    pdhg = PdhgSpec(
        A_full=A,
        prox_primal=(lambda x, tau: x) if kind == "zero" else
        (lambda x, tau: np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)),
        prox_dual=lambda y, sigma: np.clip(y, -1.0, 1.0),
    )

    return SaddleProblem(A=A, f_prox=f_prox, g_prox=g_prox, f_eval=f_eval,
                         g_eval=g_eval, S=ident, R=ident,
                         normal_metric=ident, objective=objective, pdhg=pdhg)


def toy_saddle(kind: str = "abs"):
    """A saddle point of the toy instance (both kinds admit (0, 0))."""
    return np.zeros(1), np.zeros(1)
