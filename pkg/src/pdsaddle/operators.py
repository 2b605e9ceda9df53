"""Linear operators and symmetric positive definite metrics.

Everything downstream (prox certificates, the outer solver, the TV-L1
application) is phrased in terms of a ``LinearMap`` and a ``Metric``:
weighted norms ``sqrt(<x, Mx>)``, normal metrics ``A^T R A``, spectral
norm estimates and the step-size condition ``R - tau*lam*S^{-1} > 0``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, SingularMetricError

Vector = np.ndarray


def conjugate_gradient(apply_fn, b, tol=1e-10, maxiter=None, x0=None):
    """Solve ``apply_fn(x) = b`` for an SPD operator by conjugate gradient.

    Raises SingularMetricError if the relative residual has not reached
    ``tol`` within ``maxiter`` iterations (default ``10 * dim``), which is
    how rank deficiency of a composed normal metric is detected.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if maxiter is None:
        maxiter = 10 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_fn(x)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros(n)
    p = r.copy()
    rs = float(r @ r)
    for _ in range(maxiter):
        if np.sqrt(rs) <= tol * b_norm:
            return x
        ap = apply_fn(p)
        pap = float(p @ ap)
        if pap <= 0.0:
            raise SingularMetricError(
                "conjugate gradient met a non-positive curvature direction"
            )
        alpha = rs / pap
        x = x + alpha * p
        r = r - alpha * ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) <= tol * b_norm:
        return x
    raise SingularMetricError(
        f"conjugate gradient stagnated at relative residual "
        f"{np.sqrt(rs) / b_norm:.3e}"
    )


class LinearMap:
    """Matrix-free linear operator with an explicit adjoint."""

    def __init__(self, in_dim: int, out_dim: int,
                 apply_fn: Callable[[Vector], Vector],
                 adjoint_fn: Callable[[Vector], Vector]):
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self._apply = apply_fn
        self._adjoint = adjoint_fn

    def apply(self, x: Vector) -> Vector:
        x = np.asarray(x, dtype=float)
        if x.size != self.in_dim:
            raise DimensionMismatchError(
                f"expected input of dim {self.in_dim}, got {x.size}")
        return self._apply(x)

    def adjoint_apply(self, y: Vector) -> Vector:
        y = np.asarray(y, dtype=float)
        if y.size != self.out_dim:
            raise DimensionMismatchError(
                f"expected input of dim {self.out_dim}, got {y.size}")
        return self._adjoint(y)

    def __call__(self, x: Vector) -> Vector:
        return self.apply(x)

    @classmethod
    def identity(cls, n: int) -> "LinearMap":
        return cls(n, n, lambda x: np.array(x, dtype=float),
                   lambda y: np.array(y, dtype=float))

    @classmethod
    def from_matrix(cls, mat) -> "LinearMap":
        mat = np.asarray(mat, dtype=float)
        return cls(mat.shape[1], mat.shape[0],
                   lambda x: mat @ x, lambda y: mat.T @ y)

    def scaled(self, c: float) -> "LinearMap":
        return LinearMap(self.in_dim, self.out_dim,
                         lambda x: c * self.apply(x),
                         lambda y: c * self.adjoint_apply(y))


def vstack_maps(maps: list[LinearMap]) -> LinearMap:
    """Stack operators vertically: x -> (A1 x, A2 x, ...)."""
    in_dim = maps[0].in_dim
    if any(m.in_dim != in_dim for m in maps):
        raise DimensionMismatchError("stacked maps must share the input dim")
    out_dims = [m.out_dim for m in maps]
    offsets = np.concatenate([[0], np.cumsum(out_dims)])
    out_dim = int(offsets[-1])

    def apply_fn(x):
        return np.concatenate([m.apply(x) for m in maps])

    def adjoint_fn(y):
        acc = np.zeros(in_dim)
        for m, lo, hi in zip(maps, offsets[:-1], offsets[1:]):
            acc += m.adjoint_apply(y[lo:hi])
        return acc

    return LinearMap(in_dim, out_dim, apply_fn, adjoint_fn)


class Metric:
    """SPD bilinear form with apply, inverse-apply and an induced norm.

    ``structure`` is one of ``identity-scaled``, ``diagonal``,
    ``block-diagonal-scaled-identity`` or ``general-spd-via-solver``.
    ``diagonal()`` returns the diagonal entries when the metric is
    (block-)diagonal and None otherwise; the fast paths in
    ``check_step_condition`` key on it.
    """

    structure = "general-spd-via-solver"

    def __init__(self, dim: int):
        self.dim = int(dim)

    def apply(self, x: Vector) -> Vector:
        raise NotImplementedError

    def inverse_apply(self, x: Vector) -> Vector:
        raise NotImplementedError

    def diagonal(self):
        return None

    def quad(self, x: Vector) -> float:
        """<x, Mx>, clipped at zero against roundoff."""
        x = self._check(x)
        return max(float(x @ self.apply(x)), 0.0)

    def _check(self, x: Vector) -> Vector:
        x = np.asarray(x, dtype=float)
        if x.size != self.dim:
            raise DimensionMismatchError(
                f"metric of dim {self.dim} applied to vector of dim {x.size}")
        return x


class ScaledIdentityMetric(Metric):
    structure = "identity-scaled"

    def __init__(self, dim: int, scale: float = 1.0):
        super().__init__(dim)
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.scale = float(scale)

    def apply(self, x):
        return self.scale * self._check(x)

    def inverse_apply(self, x):
        return self._check(x) / self.scale

    def diagonal(self):
        return np.full(self.dim, self.scale)


class DiagonalMetric(Metric):
    structure = "diagonal"

    def __init__(self, diag):
        diag = np.asarray(diag, dtype=float)
        if np.any(diag <= 0):
            raise ValueError("diagonal entries must be positive")
        super().__init__(diag.size)
        self._diag = diag

    def apply(self, x):
        return self._diag * self._check(x)

    def inverse_apply(self, x):
        return self._check(x) / self._diag

    def diagonal(self):
        return self._diag


class BlockMetric(Metric):
    """Block-diagonal metric, each block a scaled identity."""

    structure = "block-diagonal-scaled-identity"

    def __init__(self, blocks: list[tuple[float, int]]):
        if any(s <= 0 or d <= 0 for s, d in blocks):
            raise ValueError("block scales and dims must be positive")
        super().__init__(sum(d for _, d in blocks))
        self.blocks = [(float(s), int(d)) for s, d in blocks]
        self._diag = np.concatenate(
            [np.full(d, s) for s, d in self.blocks])

    def apply(self, x):
        return self._diag * self._check(x)

    def inverse_apply(self, x):
        return self._check(x) / self._diag

    def diagonal(self):
        return self._diag


class CallableMetric(Metric):
    """General SPD metric given by an apply callable.

    The inverse is a conjugate-gradient solve (tolerance 1e-10, at most
    ``10 * dim`` iterations) unless an explicit inverse is supplied.
    """

    structure = "general-spd-via-solver"

    def __init__(self, dim, apply_fn, inverse_fn=None, cg_tol=1e-10):
        super().__init__(dim)
        self._apply_fn = apply_fn
        self._inverse_fn = inverse_fn
        self._cg_tol = cg_tol

    def apply(self, x):
        return self._apply_fn(self._check(x))

    def inverse_apply(self, x):
        x = self._check(x)
        if self._inverse_fn is not None:
            return self._inverse_fn(x)
        return conjugate_gradient(self._apply_fn, x, tol=self._cg_tol)


class FourierMetric(Metric):
    """SPD metric diagonalized by the 2-D DFT (periodic convolutions).

    ``symbol`` holds the strictly positive eigenvalues on the frequency
    grid; apply and inverse-apply are two transforms plus a pointwise
    multiply or divide.
    """

    structure = "general-spd-via-solver"

    def __init__(self, shape: tuple[int, int], symbol: np.ndarray):
        rows, cols = shape
        super().__init__(rows * cols)
        self.shape = (rows, cols)
        symbol = np.asarray(symbol, dtype=float)
        if symbol.shape != (rows, cols):
            raise DimensionMismatchError("symbol shape mismatch")
        if np.any(symbol <= 0):
            raise SingularMetricError("Fourier symbol has nonpositive entries")
        self.symbol = symbol

    def _transform(self, x, factor):
        img = self._check(x).reshape(self.shape)
        out = np.fft.ifft2(np.fft.fft2(img) * factor)
        return np.real(out).ravel()

    def apply(self, x):
        return self._transform(x, self.symbol)

    def inverse_apply(self, x):
        return self._transform(x, 1.0 / self.symbol)


def metric_norm(x: Vector, M: Metric) -> float:
    """Weighted norm ``sqrt(<x, Mx>)``."""
    return float(np.sqrt(M.quad(x)))


def compose_normal_metric(A: LinearMap, R: Metric) -> Metric:
    """Metric ``x -> A^T R A x``; caller asserts A has full column rank.

    The inverse is applied by conjugate gradient; a rank-deficient A
    surfaces as SingularMetricError from the stagnating solve.
    """
    if A.out_dim != R.dim:
        raise DimensionMismatchError("A.out_dim must equal R.dim")
    return CallableMetric(
        A.in_dim, lambda x: A.adjoint_apply(R.apply(A.apply(x))))


def estimate_norm(A: LinearMap, iters: int = 200, seed: int = 0,
                  return_history: bool = False):
    """Largest singular value of A by power iteration on A^T A.

    Deterministic given the seed.  The Rayleigh-quotient estimates are
    monotonically nondecreasing, so the result approaches sigma_max from
    below.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.in_dim)
    history = []
    est = 0.0
    for _ in range(iters):
        w = A.adjoint_apply(A.apply(v))
        nv = np.linalg.norm(v)
        if nv == 0.0:
            break
        rayleigh = float(v @ w) / (nv * nv)
        est = np.sqrt(max(rayleigh, 0.0))
        history.append(est)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            est = 0.0
            history[-1] = 0.0
            break
        v = w / nw
    if return_history:
        return est, history
    return est


def _power_iteration_sym(op, dim, iters=300, seed=0):
    """lambda_max of a symmetric PSD operator."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    lam = 0.0
    for _ in range(iters):
        w = op(v)
        nv = float(v @ v)
        if nv == 0.0:
            return 0.0
        lam = float(v @ w) / nv
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    return lam


def smallest_eigenvalue(op, dim, iters=300, seed=0):
    """lambda_min of a symmetric operator via a spectral shift.

    Power-iterates ``op`` for lambda_max, then power-iterates
    ``lambda_max * I - op``.
    """
    lam_max = _power_iteration_sym(op, dim, iters, seed)
    shift = abs(lam_max) + 1.0
    lam_shifted = _power_iteration_sym(
        lambda x: shift * x - op(x), dim, iters, seed + 1)
    return shift - lam_shifted


def check_step_condition(R: Metric, S: Metric, tau: float, lam: float) -> bool:
    """True iff ``R - tau*lam*S^{-1}`` is positive definite.

    Diagonal and block structures are evaluated exactly; general metrics
    fall back to a shifted power iteration for the smallest eigenvalue.
    """
    if R.dim != S.dim:
        raise DimensionMismatchError("R and S must share a dimension")
    if tau <= 0 or lam <= 0:
        raise ValueError("tau and lambda must be positive")
    dr, ds = R.diagonal(), S.diagonal()
    if dr is not None and ds is not None:
        return bool(np.min(dr - tau * lam / ds) > 1e-12)
    lam_min = smallest_eigenvalue(
        lambda x: R.apply(x) - tau * lam * S.inverse_apply(x), R.dim)
    return lam_min > 1e-12
