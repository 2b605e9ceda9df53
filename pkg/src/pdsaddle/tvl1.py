"""TV-L1 deblurring: F(x) = ||Kx - f||_1 + mu ||Dx||_1.

The model is split with gamma1 + gamma2 = mu and solved in saddle form

    min_x max_{u,v}  gamma1 ||Dx||_1 + <Ax, y> - ind(u) - ind(v) - <f, u>

with A = [K; D], ||u||_inf <= 1 and ||v||_inf <= gamma2, so the v-ball
radius carries the remaining TV weight:
sup_v <Dx, v> = gamma2 ||Dx||_1.  The dual
updates are componentwise clamps; the x-subproblem is the weighted TV
prox handed to the FISTA inner solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (ConfigurationError, InfeasibleDualError,
                     InvalidKernelError, SingularMetricError)
from .innersolve import (InnerProblem, estimate_dual_lipschitz,
                         fista_certified_prox)
from .operators import (BlockMetric, CallableMetric, FourierMetric, LinearMap,
                        Metric, vstack_maps)
from .pdcore import PdhgSpec, SaddleProblem

# Inner duality-gap target standing in for a tolerance of exactly zero,
# scaled by the inner objective magnitude: the gap is a difference of
# O(scale) quantities, so an absolute 1e-12 can sit below float noise.
EXACT_GAP_FLOOR = 1e-12

# Grids up to this many pixels densify D (B^T B)^{-1} D^T once and share
# it across all inner solves (the 2n x 2n matrix stays small).
_DENSE_HESS_MAX_PIXELS = 1024

_FEAS_TOL = 1e-9


def _shift_invariant_symbol(apply_img, shape):
    """DFT symbol of a periodic shift-invariant operator (its impulse
    response transformed)."""
    delta = np.zeros(shape)
    delta[0, 0] = 1.0
    return np.fft.fft2(apply_img(delta))


def make_gradient(rows: int, cols: int, boundary: str = "periodic") -> LinearMap:
    """2-D forward-difference gradient, output stacked (horizontal, vertical).

    The adjoint is the negative divergence.  For the periodic boundary the
    squared spectral norm is at most 8.
    """
    n = rows * cols

    if boundary == "periodic":
        def apply_fn(x):
            img = x.reshape(rows, cols)
            h = np.roll(img, -1, axis=1) - img
            v = np.roll(img, -1, axis=0) - img
            return np.concatenate([h.ravel(), v.ravel()])

        def adjoint_fn(y):
            h = y[:n].reshape(rows, cols)
            v = y[n:].reshape(rows, cols)
            out = (np.roll(h, 1, axis=1) - h) + (np.roll(v, 1, axis=0) - v)
            return out.ravel()
    elif boundary == "neumann":
        def apply_fn(x):
            img = x.reshape(rows, cols)
            h = np.zeros_like(img)
            v = np.zeros_like(img)
            h[:, :-1] = img[:, 1:] - img[:, :-1]
            v[:-1, :] = img[1:, :] - img[:-1, :]
            return np.concatenate([h.ravel(), v.ravel()])

        def adjoint_fn(y):
            h = y[:n].reshape(rows, cols).copy()
            v = y[n:].reshape(rows, cols).copy()
            h[:, -1] = 0.0
            v[-1, :] = 0.0
            out = np.zeros((rows, cols))
            out[:, :-1] -= h[:, :-1]
            out[:, 1:] += h[:, :-1]
            out[:-1, :] -= v[:-1, :]
            out[1:, :] += v[:-1, :]
            return out.ravel()
    else:
        raise ConfigurationError(f"unknown boundary {boundary!r}")

    return LinearMap(n, 2 * n, apply_fn, adjoint_fn)


def make_blur(rows: int, cols: int, hsize: int,
              boundary: str = "periodic") -> LinearMap:
    """Uniform hsize x hsize averaging blur (weights 1/hsize^2).

    Self-adjoint under the periodic boundary; the Neumann variant
    replicates edge pixels and carries the exact scatter adjoint.
    """
    if hsize < 1 or hsize % 2 == 0:
        raise InvalidKernelError("hsize must be odd and positive")
    n = rows * cols
    half = hsize // 2
    w = 1.0 / (hsize * hsize)

    if boundary == "periodic":
        kernel = np.zeros((rows, cols))
        for di in range(-half, half + 1):
            for dj in range(-half, half + 1):
                kernel[di % rows, dj % cols] += w
        khat = np.fft.fft2(kernel)

        def apply_fn(x):
            img = x.reshape(rows, cols)
            return np.real(np.fft.ifft2(np.fft.fft2(img) * khat)).ravel()

        def adjoint_fn(y):
            img = y.reshape(rows, cols)
            return np.real(
                np.fft.ifft2(np.fft.fft2(img) * np.conj(khat))).ravel()
    elif boundary == "neumann":
        ridx = np.clip(np.arange(rows)[:, None] + np.arange(-half, half + 1),
                       0, rows - 1)
        cidx = np.clip(np.arange(cols)[:, None] + np.arange(-half, half + 1),
                       0, cols - 1)

        def apply_fn(x):
            img = x.reshape(rows, cols)
            out = np.zeros((rows, cols))
            for a in range(hsize):
                for b in range(hsize):
                    out += img[ridx[:, a]][:, cidx[:, b]]
            return (w * out).ravel()

        def adjoint_fn(y):
            img = y.reshape(rows, cols)
            out = np.zeros((rows, cols))
            for a in range(hsize):
                for b in range(hsize):
                    np.add.at(out, (ridx[:, a][:, None], cidx[:, b][None, :]),
                              w * img)
            return out.ravel()
    else:
        raise ConfigurationError(f"unknown boundary {boundary!r}")

    return LinearMap(n, n, apply_fn, adjoint_fn)


@dataclass
class DualPair:
    """Feasible dual pair: ||u||_inf <= 1, ||v||_inf <= gamma2."""

    u: np.ndarray
    v: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u, self.v])


@dataclass
class TvL1Problem:
    observed: np.ndarray           # rows x cols, values in [0, 1]
    K: LinearMap
    Dgrad: LinearMap
    mu: float
    gamma1: float
    gamma2: float
    s1: float
    s2: float
    r1: float
    r2: float
    boundary: str = "periodic"
    B: LinearMap = None
    BtB: Metric = None
    A: LinearMap = None
    S: Metric = None
    R: Metric = None
    _dual_base_lipschitz: Optional[float] = field(default=None, repr=False)
    _dual_hessian: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def rows(self):
        return self.observed.shape[0]

    @property
    def cols(self):
        return self.observed.shape[1]

    @property
    def f_flat(self):
        return self.observed.ravel()

    def split_dual(self, y):
        m = self.K.out_dim
        return DualPair(u=y[:m], v=y[m:])

    def dual_hessian_matvec(self):
        """Matvec for the constant dual Hessian base D (B^T B)^{-1} D^T.

        Densified once on small grids (every inner solve shares it; the
        FISTA iteration then costs one BLAS matvec); the operator
        composition is used beyond the size cutoff.
        """
        if self.rows * self.cols <= _DENSE_HESS_MAX_PIXELS:
            if self._dual_hessian is None:
                m = self.Dgrad.out_dim
                H = np.empty((m, m))
                e = np.zeros(m)
                for j in range(m):
                    e[j] = 1.0
                    H[:, j] = self.Dgrad.apply(
                        self.BtB.inverse_apply(self.Dgrad.adjoint_apply(e)))
                    e[j] = 0.0
                # Symmetrize away solver round-off.
                self._dual_hessian = 0.5 * (H + H.T)
            H = self._dual_hessian
            return lambda v: H @ v
        return lambda v: self.Dgrad.apply(
            self.BtB.inverse_apply(self.Dgrad.adjoint_apply(v)))

    def dual_lipschitz_base(self) -> float:
        """sigma_max(D (B^T B)^{-1} D^T), cached; the FISTA constant is
        gamma1 times this."""
        if self._dual_base_lipschitz is None:
            probe = InnerProblem(B=self.B, BtB=self.BtB,
                                 xi=np.zeros(self.B.out_dim), gamma1=1.0,
                                 Dgrad=self.Dgrad,
                                 hess0=self.dual_hessian_matvec())
            self._dual_base_lipschitz = estimate_dual_lipschitz(probe)
        return self._dual_base_lipschitz


def make_tvl1(observed, hsize: int = 9, mu: float = 0.05,
              gamma1: Optional[float] = None, s1: float = 1.0,
              s2: float = 2.0, r1: Optional[float] = None,
              r2: Optional[float] = None,
              boundary: str = "periodic") -> TvL1Problem:
    """Assemble the TV-L1 problem around an observed image.

    Defaults follow the sensitivity-study configuration: gamma1 = mu/2,
    r_i = 0.99 / s_i.  The periodic boundary gets an FFT-diagonalized
    B^T B; otherwise the inverse falls back to conjugate gradient.
    """
    observed = np.asarray(observed, dtype=float)
    if observed.ndim != 2:
        raise ConfigurationError("observed image must be 2-D")
    if mu <= 0:
        raise ConfigurationError("mu must be positive")
    if gamma1 is None:
        gamma1 = 0.5 * mu
    if not 0.0 < gamma1 < mu:
        raise ConfigurationError("gamma1 must lie strictly inside (0, mu)")
    gamma2 = mu - gamma1
    if r1 is None:
        r1 = 0.99 / s1
    if r2 is None:
        r2 = 0.99 / s2
    if min(s1, s2, r1, r2) <= 0:
        raise ConfigurationError("step scales must be positive")

    rows, cols = observed.shape
    K = make_blur(rows, cols, hsize, boundary)
    D = make_gradient(rows, cols, boundary)
    B = vstack_maps([K.scaled(1.0 / np.sqrt(r1)),
                     D.scaled(1.0 / np.sqrt(r2))])
    A = vstack_maps([K, D])
    S = BlockMetric([(1.0 / s1, K.out_dim), (1.0 / s2, D.out_dim)])
    R = BlockMetric([(1.0 / r1, K.out_dim), (1.0 / r2, D.out_dim)])

    if boundary == "periodic":
        khat = _shift_invariant_symbol(
            lambda im: K.apply(im.ravel()).reshape(rows, cols), (rows, cols))
        dh = _shift_invariant_symbol(
            lambda im: D.apply(im.ravel())[:rows * cols].reshape(rows, cols),
            (rows, cols))
        dv = _shift_invariant_symbol(
            lambda im: D.apply(im.ravel())[rows * cols:].reshape(rows, cols),
            (rows, cols))
        symbol = (np.abs(khat) ** 2 / r1
                  + (np.abs(dh) ** 2 + np.abs(dv) ** 2) / r2)
        # Randomized null-space assumption N(K) n N(D) = {0}, checked
        # exactly on the frequency grid here.
        if np.min(symbol) <= 1e-14:
            raise SingularMetricError(
                "B^T B is singular: blur and gradient share a null direction")
        btb = FourierMetric((rows, cols), np.real(symbol))
    else:
        btb = CallableMetric(
            rows * cols, lambda x: B.adjoint_apply(B.apply(x)))

    return TvL1Problem(observed=observed, K=K, Dgrad=D, mu=mu, gamma1=gamma1,
                       gamma2=gamma2, s1=s1, s2=s2, r1=r1, r2=r2,
                       boundary=boundary, B=B, BtB=btb, A=A, S=S, R=R)


def objective(P: TvL1Problem, x) -> float:
    """F(x) = ||Kx - f||_1 + mu ||Dx||_1."""
    x = np.asarray(x, dtype=float)
    fid = float(np.sum(np.abs(P.K.apply(x) - P.f_flat)))
    tv = float(np.sum(np.abs(P.Dgrad.apply(x))))
    return fid + P.mu * tv


def saddle_objective(P: TvL1Problem, x, dual: DualPair) -> float:
    """L(x, (u, v)) of the split saddle form; requires a feasible dual."""
    if np.max(np.abs(dual.u), initial=0.0) > 1.0 + _FEAS_TOL:
        raise InfeasibleDualError("u leaves the unit inf-ball")
    if np.max(np.abs(dual.v), initial=0.0) > P.gamma2 + _FEAS_TOL:
        raise InfeasibleDualError("v leaves the gamma2 inf-ball")
    x = np.asarray(x, dtype=float)
    dx = P.Dgrad.apply(x)
    return (P.gamma1 * float(np.sum(np.abs(dx)))
            + float(P.K.apply(x) @ dual.u) + float(dx @ dual.v)
            - float(P.f_flat @ dual.u))


def dual_update(P: TvL1Problem, prev: DualPair, x) -> DualPair:
    """Exact closed-form dual step: componentwise clamps."""
    x = np.asarray(x, dtype=float)
    u = np.clip(prev.u + P.s1 * (P.K.apply(x) - P.f_flat), -1.0, 1.0)
    v = np.clip(prev.v + P.s2 * P.Dgrad.apply(x), -P.gamma2, P.gamma2)
    return DualPair(u=u, v=v)


def build_inner(P: TvL1Problem, x_prev, dual: DualPair) -> InnerProblem:
    """x-subproblem instance from the freshly updated dual pair.

    xi = [K x/sqrt(r1) - sqrt(r1) u; D x/sqrt(r2) - sqrt(r2) v];
    the prox center z solves (B^T B) z = B^T xi.
    """
    x_prev = np.asarray(x_prev, dtype=float)
    xi = np.concatenate([
        P.K.apply(x_prev) / np.sqrt(P.r1) - np.sqrt(P.r1) * dual.u,
        P.Dgrad.apply(x_prev) / np.sqrt(P.r2) - np.sqrt(P.r2) * dual.v,
    ])
    return InnerProblem(B=P.B, BtB=P.BtB, xi=xi, gamma1=P.gamma1,
                        Dgrad=P.Dgrad,
                        lipschitz=P.gamma1 * P.dual_lipschitz_base(),
                        hess0=P.dual_hessian_matvec())


def inner_from_center(P: TvL1Problem, center, lam: float = 1.0) -> InnerProblem:
    """Inner problem for the prox of lam*gamma1*||D .||_1 at a given center
    in the B^T B geometry (the oracle-facing constructor)."""
    center = np.asarray(center, dtype=float)
    gamma_eff = lam * P.gamma1
    return InnerProblem(B=P.B, BtB=P.BtB, xi=P.B.apply(center),
                        gamma1=gamma_eff, Dgrad=P.Dgrad,
                        Bt_xi=P.BtB.apply(center), z=center.copy(),
                        lipschitz=gamma_eff * P.dual_lipschitz_base(),
                        hess0=P.dual_hessian_matvec())


def make_saddle(P: TvL1Problem, max_inner: int = 50000) -> SaddleProblem:
    """Wire the TV-L1 problem into a SaddleProblem.

    The g-prox is the exact clamp; the f-prox runs the certified FISTA
    inner solve, warm-starting its dual across outer iterations.  The
    returned object owns the warm-start state: use one per run.
    """
    n = P.K.in_dim
    m = P.K.out_dim
    warm = {"v": None}

    def f_eval(x):
        return P.gamma1 * float(np.sum(np.abs(P.Dgrad.apply(x))))

    def g_eval(y):
        u, v = y[:m], y[m:]
        if (np.max(np.abs(u), initial=0.0) > 1.0 + _FEAS_TOL
                or np.max(np.abs(v), initial=0.0) > P.gamma2 + _FEAS_TOL):
            return np.inf
        return float(P.f_flat @ u)

    def g_prox(center, tau, metric, tol):
        u = np.clip(center[:m] - tau * P.s1 * P.f_flat, -1.0, 1.0)
        v = np.clip(center[m:], -P.gamma2, P.gamma2)
        return np.concatenate([u, v]), 0.0, 0

    def f_prox(center, lam, metric, tol):
        ip = inner_from_center(P, center, lam)
        if tol > 0:
            target = tol
        else:
            target = EXACT_GAP_FLOOR * (1.0 + ip.primal_value(ip.z))
        res = fista_certified_prox(ip, target, v_warm=warm["v"],
                                   max_iters=max_inner)
        warm["v"] = res.v
        return res.x, res.gap, res.iterations

    def pdhg_prox_dual(y, sigma):
        p = np.clip(y[:m] - sigma * P.f_flat, -1.0, 1.0)
        q = np.clip(y[m:], -P.mu, P.mu)
        return np.concatenate([p, q])

    pdhg = PdhgSpec(
        A_full=vstack_maps([P.K, P.Dgrad]),
        prox_primal=lambda x, tau: x,
        prox_dual=pdhg_prox_dual,
    )

    return SaddleProblem(A=P.A, f_prox=f_prox, g_prox=g_prox,
                         f_eval=f_eval, g_eval=g_eval, S=P.S, R=P.R,
                         normal_metric=P.BtB,
                         objective=lambda x: objective(P, x), pdhg=pdhg)


def initial_point(P: TvL1Problem):
    """x^0 = observed image, dual started at zero."""
    return P.f_flat.copy(), np.zeros(P.A.out_dim)
