"""Outer primal-dual solvers with correction step.

One outer iteration of the inexact method is

    y^{k+1}  ~type-2, eps_{k+1}/2~  argmax_y L(x^k, y) - (1/(2 tau_k)) ||y - ybar^k||_S^2
    x^{k+1}  ~type-2, delta_{k+1}~  argmin_x L(x, y^{k+1}) + (1/(2 lam_k)) ||A(x - x^k)||_R^2
    ybar^{k+1} ~type-1, eps_{k+1}/2~ argmax_y L(x^{k+1}, y) - (1/(2 tau_k)) ||y - ybar^k||_S^2

for the Lagrangian L(x, y) = f(x) + <Ax, y> - g(y).  Tolerances follow
the schedule eps_n = c_eps * n^{-(alpha + 1/2)} (same for delta), and the
error ledgers A_N, B_N feed the ergodic rate bound.

The exact method is the same recursion with zero tolerances, and the PDL
method is the exact method under unit steps and block-scaled identity
metrics; both reductions share this code path bit for bit.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import (ConfigurationError, DivergenceError, EmptyAverageError,
                     InsufficientDataError)
from .operators import (BlockMetric, LinearMap, Metric, check_step_condition,
                        compose_normal_metric, estimate_norm, metric_norm)

CSV_HEADER = "iter,objective,gap,eps,delta,inner_iters,cum_inner_iters,wall_ms"

# Prox oracle signature: (center, tau, metric, tolerance) ->
# (point, achieved_eps) or (point, achieved_eps, inner_iters).
ProxOracle = Callable


@dataclass(frozen=True)
class ToleranceSchedule:
    """Error tolerances eps_n, delta_n = c * n^{-(alpha+1/2)} and the
    (default constant) step sequences tau_k, lambda_k."""

    alpha: float = 1.0
    c_eps: float = 1.0
    c_delta: float = 1.0
    tau_const: float = 1.0
    lam_const: float = 1.0

    def eps(self, n: int) -> float:
        return self.c_eps * n ** -(self.alpha + 0.5) if n >= 1 else self.c_eps

    def delta(self, n: int) -> float:
        return self.c_delta * n ** -(self.alpha + 0.5) if n >= 1 else self.c_delta

    def tau(self, k: int) -> float:
        return self.tau_const

    def lam(self, k: int) -> float:
        return self.lam_const

    def exact(self) -> "ToleranceSchedule":
        """Same steps, zero tolerances."""
        return replace(self, c_eps=0.0, c_delta=0.0)


@dataclass
class SaddleProblem:
    """Saddle-point data: L(x, y) = f(x) + <Ax, y> - g(y).

    The prox oracles solve the two subproblems of one outer iteration to
    a requested type-2 (resp. type-1) tolerance and report the tolerance
    they actually certified.  ``normal_metric`` is A^T R A; pass an
    explicit one when a structured inverse (e.g. FFT) is available.
    """

    A: LinearMap
    f_prox: ProxOracle
    g_prox: ProxOracle
    f_eval: Callable[[np.ndarray], float]
    g_eval: Callable[[np.ndarray], float]
    S: Metric
    R: Metric
    normal_metric: Optional[Metric] = None
    objective: Optional[Callable[[np.ndarray], float]] = None
    pdhg: Optional["PdhgSpec"] = None

    def __post_init__(self):
        if self.normal_metric is None:
            self.normal_metric = compose_normal_metric(self.A, self.R)
        if self.objective is None:
            self.objective = self.f_eval

    def lagrangian(self, x, y) -> float:
        return (self.f_eval(x) + float(self.A.apply(x) @ y) - self.g_eval(y))


@dataclass
class PdhgSpec:
    """Resolvents of the classical two-step primal-dual baseline.

    ``A_full`` is the full dualization operator; the resolvents are the
    usual prox maps of the primal term and the dual conjugate at the
    given step sizes.
    """

    A_full: LinearMap
    prox_primal: Callable[[np.ndarray, float], np.ndarray]
    prox_dual: Callable[[np.ndarray, float], np.ndarray]
    step_fraction: float = 0.99


@dataclass
class SolverState:
    x: np.ndarray
    y: np.ndarray
    y_bar: np.ndarray
    k: int = 0
    ergodic_x_sum: np.ndarray = None
    ergodic_y_sum: np.ndarray = None
    a_raw: float = 0.0     # sum of sqrt(eps_{k+1}/tau_k)
    b_raw: float = 0.0     # sum of (2 eps_{k+1} + delta_{k+1})
    inner_iteration_total: int = 0

    def __post_init__(self):
        if self.ergodic_x_sum is None:
            self.ergodic_x_sum = np.zeros_like(self.x)
        if self.ergodic_y_sum is None:
            self.ergodic_y_sum = np.zeros_like(self.y)

    def a_ledger(self, tau_N: float) -> float:
        """A_N = tau_N * sum_k sqrt(eps_{k+1}/tau_k)."""
        return tau_N * self.a_raw

    def b_ledger(self, tau_N: float) -> float:
        """B_N = tau_N * sum_k (2 eps_{k+1} + delta_{k+1})."""
        return tau_N * self.b_raw


def init_state(x0, y0) -> SolverState:
    x0 = np.asarray(x0, dtype=float).copy()
    y0 = np.asarray(y0, dtype=float).copy()
    # The paper leaves the y^0 / ybar^0 distinction open; we start both
    # at the same point.
    return SolverState(x=x0, y=y0.copy(), y_bar=y0.copy())


def _call_oracle(oracle, center, tau, metric, tol):
    out = oracle(center, tau, metric, tol)
    if len(out) == 2:
        point, eps = out
        iters = 0
    else:
        point, eps, iters = out
    return np.asarray(point, dtype=float), float(eps), int(iters)


def outer_step_inexact(P: SaddleProblem, st: SolverState,
                       sched: ToleranceSchedule) -> SolverState:
    """One prediction-correction iteration; returns the new state.

    Ledgers accumulate the *scheduled* tolerances (the theory's worst
    case), not the typically smaller achieved ones.
    """
    k = st.k
    tau_k, lam_k = sched.tau(k), sched.lam(k)
    if k == 0 and not check_step_condition(P.R, P.S, tau_k, lam_k):
        raise ConfigurationError(
            f"step condition R - tau*lam*S^{{-1}} > 0 fails at "
            f"tau={tau_k}, lam={lam_k}")
    eps = sched.eps(k + 1)
    delta = sched.delta(k + 1)
    M = P.normal_metric

    # Prediction: maximize over y at the old primal point.
    c_y = st.y_bar + tau_k * P.S.inverse_apply(P.A.apply(st.x))
    y_new, _, it_y = _call_oracle(P.g_prox, c_y, tau_k, P.S, eps / 2.0)

    # Primal step in the A^T R A geometry; the metric M = A^T R A already
    # carries R, so the linear term of L contributes plain A^T y.
    c_x = st.x - lam_k * M.inverse_apply(P.A.adjoint_apply(y_new))
    x_new, _, it_x = _call_oracle(P.f_prox, c_x, lam_k, M, delta)

    # Correction: re-maximize at the new primal point (type-1 suffices).
    c_yb = st.y_bar + tau_k * P.S.inverse_apply(P.A.apply(x_new))
    yb_new, _, it_yb = _call_oracle(P.g_prox, c_yb, tau_k, P.S, eps / 2.0)

    return SolverState(
        x=x_new, y=y_new, y_bar=yb_new, k=k + 1,
        ergodic_x_sum=st.ergodic_x_sum + x_new,
        ergodic_y_sum=st.ergodic_y_sum + y_new,
        a_raw=st.a_raw + math.sqrt(eps / tau_k),
        b_raw=st.b_raw + (2.0 * eps + delta),
        inner_iteration_total=st.inner_iteration_total + it_y + it_x + it_yb,
    )


def outer_step_exact(P: SaddleProblem, st: SolverState,
                     sched: ToleranceSchedule) -> SolverState:
    """The exact correction-step method: zero tolerances, zero ledgers."""
    return outer_step_inexact(P, st, sched.exact())


def make_pdl_config(r1, s1, r2, s2, dim1, dim2):
    """Block metrics of the PDL special case plus its unit steps.

    R = diag((1/r1) I_1, (1/r2) I_2), S likewise with s_i; the step
    condition reduces to 1/r_i - s_i > 0 per block.
    """
    if min(r1, s1, r2, s2) <= 0:
        raise ValueError("r_i, s_i must be positive")
    R = BlockMetric([(1.0 / r1, dim1), (1.0 / r2, dim2)])
    S = BlockMetric([(1.0 / s1, dim1), (1.0 / s2, dim2)])
    return S, R, (1.0, 1.0)


def ergodic_point(st: SolverState):
    """Running means (xhat^N, yhat^N) of the first k iterates."""
    if st.k < 1:
        raise EmptyAverageError("no iterations to average")
    return st.ergodic_x_sum / st.k, st.ergodic_y_sum / st.k


def rate_bound_rhs(st: SolverState, sched: ToleranceSchedule,
                   dist_y0: float, dist_x0: float) -> float:
    """Right side of the ergodic gap bound at N = st.k.

    dist_y0 = ||y* - ybar^0||_S and dist_x0 = ||x* - x^0||_{A^T R A}
    are supplied by the caller (they require a known saddle point).
    """
    N = st.k
    if N == 0:
        raise EmptyAverageError("bound undefined at N = 0")
    tau_N, tau_0, lam_0 = sched.tau(N), sched.tau(0), sched.lam(0)
    A_N = st.a_ledger(tau_N)
    B_N = st.b_ledger(tau_N)
    inner = (math.sqrt(tau_N / tau_0) * dist_y0
             + math.sqrt(tau_N / lam_0) * dist_x0
             + 2.0 * A_N + math.sqrt(2.0 * B_N))
    return inner ** 2 / (2.0 * N * tau_N)


@dataclass(frozen=True)
class StoppingRule:
    """Stop at max_iters, or when (F(x)-F*)/F* < rel_tol, or both."""

    max_iters: int
    rel_tol: Optional[float] = None
    f_star: Optional[float] = None

    def satisfied(self, objective: float) -> bool:
        if self.rel_tol is None or self.f_star is None:
            return False
        return (objective - self.f_star) / self.f_star < self.rel_tol


@dataclass
class RunRecord:
    """Per-iteration log of one solver run."""

    algorithm: str
    rows: list = field(default_factory=list)
    final_state: Optional[SolverState] = None

    def append(self, k, objective, gap, eps, delta, inner, cum_inner, wall_ms):
        self.rows.append((k, objective, gap, eps, delta, inner, cum_inner,
                          wall_ms))

    def column(self, name):
        idx = CSV_HEADER.split(",").index(name)
        return np.array([row[idx] for row in self.rows], dtype=float)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(CSV_HEADER + "\n")
            writer = csv.writer(fh)
            for row in self.rows:
                writer.writerow([repr(v) if isinstance(v, float) else v
                                 for v in row])

    @property
    def outer_iterations(self) -> int:
        return len(self.rows)

    @property
    def inner_iterations(self) -> int:
        return int(self.rows[-1][6]) if self.rows else 0


def _ergodic_gap(P, st, saddle):
    x_star, y_star = saddle
    x_hat, y_hat = ergodic_point(st)
    return P.lagrangian(x_hat, y_star) - P.lagrangian(x_star, y_hat)


def _run_correction_method(P, sched, stop, x0, y0, saddle, tag):
    if not check_step_condition(P.R, P.S, sched.tau_const, sched.lam_const):
        raise ConfigurationError("step condition fails at the step suprema")
    st = init_state(x0, y0)
    record = RunRecord(algorithm=tag, final_state=st)
    for _ in range(stop.max_iters):
        t0 = time.perf_counter()
        prev_inner = st.inner_iteration_total
        st = outer_step_inexact(P, st, sched)
        wall_ms = (time.perf_counter() - t0) * 1e3
        obj = P.objective(st.x)
        if not np.isfinite(obj) or obj > 1e12:
            raise DivergenceError(f"objective {obj} exceeded the guard")
        gap = _ergodic_gap(P, st, saddle) if saddle is not None else math.nan
        record.append(st.k, obj, gap, sched.eps(st.k), sched.delta(st.k),
                      st.inner_iteration_total - prev_inner,
                      st.inner_iteration_total, wall_ms)
        record.final_state = st
        if stop.satisfied(obj):
            break
    return record


def _run_pdhg(P, stop, x0, y0_ignored, tag):
    spec = P.pdhg
    if spec is None:
        raise ConfigurationError("problem carries no pdhg baseline spec")
    Af = spec.A_full
    L = estimate_norm(Af, iters=200, seed=0)
    step = spec.step_fraction / L if L > 0 else spec.step_fraction
    x = np.asarray(x0, dtype=float).copy()
    y = np.zeros(Af.out_dim)
    x_bar = x.copy()
    record = RunRecord(algorithm=tag)
    for n in range(1, stop.max_iters + 1):
        t0 = time.perf_counter()
        y = spec.prox_dual(y + step * Af.apply(x_bar), step)
        x_prev = x
        x = spec.prox_primal(x - step * Af.adjoint_apply(y), step)
        x_bar = 2.0 * x - x_prev
        wall_ms = (time.perf_counter() - t0) * 1e3
        obj = P.objective(x)
        if not np.isfinite(obj) or obj > 1e12:
            raise DivergenceError(f"objective {obj} exceeded the guard")
        record.append(n, obj, math.nan, 0.0, 0.0, 0, 0, wall_ms)
        if stop.satisfied(obj):
            break
    record.final_state = SolverState(x=x, y=y, y_bar=y.copy(), k=len(record.rows))
    return record


def run_solver(P: SaddleProblem, algorithm: str, sched: ToleranceSchedule,
               stop: StoppingRule, x0, y0, saddle=None) -> RunRecord:
    """Run one of {ipdl, pd_exact, pdl, pdhg} and record every iteration.

    When ``saddle`` = (x*, y*) is supplied, the gap column holds the
    ergodic primal-dual gap L(xhat, y*) - L(x*, yhat); otherwise NaN.
    """
    if algorithm == "ipdl":
        return _run_correction_method(P, sched, stop, x0, y0, saddle, "ipdl")
    if algorithm == "pd_exact":
        return _run_correction_method(P, sched.exact(), stop, x0, y0, saddle,
                                      "pd_exact")
    if algorithm == "pdl":
        unit = replace(sched.exact(), tau_const=1.0, lam_const=1.0)
        return _run_correction_method(P, unit, stop, x0, y0, saddle, "pdl")
    if algorithm == "pdhg":
        return _run_pdhg(P, stop, x0, y0, "pdhg")
    raise ConfigurationError(f"unknown algorithm tag {algorithm!r}")


def rate_report(record: RunRecord, sched: ToleranceSchedule,
                dist_y0: float, dist_x0: float, fit_range=None):
    """Log-log slope of the ergodic gap and bound-violation count.

    The per-N bound is reconstructed from the recorded tolerance columns;
    violations beyond 1e-8 absolute slack are counted (must be zero).
    ``fit_range`` = (N_lo, N_hi) selects the fit window; default is the
    last decade of iterations.
    """
    if len(record.rows) < 20:
        raise InsufficientDataError("need at least 20 iterations")
    N = record.column("iter")
    gap = record.column("gap")
    eps = record.column("eps")
    delta = record.column("delta")

    violations = 0
    a_raw = 0.0
    b_raw = 0.0
    for i in range(len(N)):
        k = int(N[i]) - 1
        a_raw += math.sqrt(eps[i] / sched.tau(k))
        b_raw += 2.0 * eps[i] + delta[i]
        tau_N = sched.tau(int(N[i]))
        inner = (math.sqrt(tau_N / sched.tau(0)) * dist_y0
                 + math.sqrt(tau_N / sched.lam(0)) * dist_x0
                 + 2.0 * tau_N * a_raw + math.sqrt(2.0 * tau_N * b_raw))
        bound = inner ** 2 / (2.0 * N[i] * tau_N)
        if gap[i] > bound + 1e-8:
            violations += 1

    if fit_range is None:
        fit_range = (N[-1] / 10.0, N[-1])
    mask = (N >= fit_range[0]) & (N <= fit_range[1]) & (gap > 0)
    if mask.sum() < 10:
        raise InsufficientDataError("too few positive gaps in the fit window")
    slope = np.polyfit(np.log(N[mask]), np.log(gap[mask]), 1)[0]
    return float(slope), violations
