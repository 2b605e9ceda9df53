import numpy as np
import pytest

from pdsaddle.errors import SingularMetricError
from pdsaddle.operators import (BlockMetric, CallableMetric, DiagonalMetric,
                                FourierMetric, LinearMap,
                                ScaledIdentityMetric, check_step_condition,
                                compose_normal_metric, conjugate_gradient,
                                estimate_norm, metric_norm,
                                smallest_eigenvalue, vstack_maps)

rng = np.random.default_rng(42)


def random_spd(n, seed=0):
    r = np.random.default_rng(seed)
    Q = r.normal(size=(n, n))
    return Q @ Q.T + n * np.eye(n)


class TestLinearMap:
    def test_from_matrix_matches_dense(self):
        mat = rng.normal(size=(7, 5))
        A = LinearMap.from_matrix(mat)
        x = rng.normal(size=5)
        y = rng.normal(size=7)
        assert np.allclose(A.apply(x), mat @ x)
        assert np.allclose(A.adjoint_apply(y), mat.T @ y)

    def test_adjoint_identity_random_pairs(self):
        mat = rng.normal(size=(6, 4))
        A = LinearMap.from_matrix(mat)
        for _ in range(20):
            x = rng.normal(size=4)
            y = rng.normal(size=6)
            assert np.isclose(A.apply(x) @ y, x @ A.adjoint_apply(y))

    def test_vstack_apply_and_adjoint(self):
        m1 = rng.normal(size=(3, 4))
        m2 = rng.normal(size=(5, 4))
        stacked = vstack_maps([LinearMap.from_matrix(m1),
                               LinearMap.from_matrix(m2)])
        dense = np.vstack([m1, m2])
        x = rng.normal(size=4)
        y = rng.normal(size=8)
        assert np.allclose(stacked.apply(x), dense @ x)
        assert np.allclose(stacked.adjoint_apply(y), dense.T @ y)

    def test_scaled(self):
        mat = rng.normal(size=(3, 3))
        A = LinearMap.from_matrix(mat).scaled(2.5)
        x = rng.normal(size=3)
        assert np.allclose(A.apply(x), 2.5 * mat @ x)
        assert np.allclose(A.adjoint_apply(x), 2.5 * mat.T @ x)


class TestConjugateGradient:
    def test_matches_dense_solve(self):
        M = random_spd(12, seed=1)
        b = rng.normal(size=12)
        x = conjugate_gradient(lambda v: M @ v, b)
        assert np.allclose(x, np.linalg.solve(M, b), atol=1e-8)

    def test_singular_raises(self):
        M = np.zeros((4, 4))
        with pytest.raises(SingularMetricError):
            conjugate_gradient(lambda v: M @ v, np.ones(4))


class TestMetrics:
    @pytest.mark.parametrize("metric,dense", [
        (ScaledIdentityMetric(5, 2.0), 2.0 * np.eye(5)),
        (DiagonalMetric(np.array([1.0, 2.0, 3.0])), np.diag([1.0, 2.0, 3.0])),
        (BlockMetric([(2.0, 2), (0.5, 3)]), np.diag([2, 2, .5, .5, .5])),
    ])
    def test_apply_inverse_quad(self, metric, dense):
        x = rng.normal(size=metric.dim)
        assert np.allclose(metric.apply(x), dense @ x)
        assert np.allclose(metric.inverse_apply(metric.apply(x)), x)
        assert np.isclose(metric.quad(x), x @ dense @ x)
        assert np.allclose(metric.diagonal(), np.diag(dense))

    def test_callable_metric_cg_inverse(self):
        M = random_spd(8, seed=3)
        metric = CallableMetric(8, lambda v: M @ v)
        x = rng.normal(size=8)
        assert np.allclose(metric.inverse_apply(M @ x), x, atol=1e-7)
        assert metric.diagonal() is None

    def test_fourier_metric_matches_dense_circulant(self):
        # symbol of a 1-2-1 periodic smoothing on a 4x4 grid
        kern = np.zeros((4, 4))
        kern[0, 0] = 5.0
        kern[0, 1] = kern[0, -1] = kern[1, 0] = kern[-1, 0] = 1.0
        symbol = np.real(np.fft.fft2(kern))
        metric = FourierMetric((4, 4), symbol)
        dense = np.empty((16, 16))
        for j in range(16):
            e = np.zeros(16)
            e[j] = 1.0
            dense[:, j] = metric.apply(e)
        x = rng.normal(size=16)
        assert np.allclose(metric.apply(x), dense @ x)
        assert np.allclose(metric.inverse_apply(dense @ x), x)
        assert np.isclose(metric.quad(x), x @ dense @ x)

    def test_metric_norm(self):
        metric = DiagonalMetric(np.array([4.0, 9.0]))
        assert np.isclose(metric_norm(np.array([1.0, 1.0]), metric),
                          np.sqrt(13.0))


class TestSpectralTools:
    def test_estimate_norm_matches_svd(self):
        mat = rng.normal(size=(9, 6))
        A = LinearMap.from_matrix(mat)
        est = estimate_norm(A, iters=500)
        assert np.isclose(est, np.linalg.svd(mat, compute_uv=False)[0],
                          rtol=1e-6)

    def test_estimate_norm_history_monotone(self):
        mat = rng.normal(size=(8, 8))
        _, hist = estimate_norm(LinearMap.from_matrix(mat), iters=60,
                                return_history=True)
        assert all(b >= a - 1e-12 for a, b in zip(hist, hist[1:]))

    def test_smallest_eigenvalue(self):
        M = random_spd(7, seed=5)
        est = smallest_eigenvalue(lambda v: M @ v, 7, iters=2000)
        assert np.isclose(est, np.linalg.eigvalsh(M)[0], rtol=1e-4)

    def test_compose_normal_metric(self):
        mat = rng.normal(size=(6, 4))
        A = LinearMap.from_matrix(mat)
        R = DiagonalMetric(np.linspace(0.5, 2.0, 6))
        M = compose_normal_metric(A, R)
        dense = mat.T @ np.diag(np.linspace(0.5, 2.0, 6)) @ mat
        x = rng.normal(size=4)
        assert np.allclose(M.apply(x), dense @ x)
        assert np.allclose(M.inverse_apply(dense @ x), x, atol=1e-7)


class TestStepCondition:
    def test_diagonal_fast_path(self):
        R = BlockMetric([(1.0 / 0.99, 3)])   # 1/r with r = 0.99
        S = BlockMetric([(1.0, 3)])          # s = 1
        assert check_step_condition(R, S, 1.0, 1.0)       # 1/0.99 - 1 > 0
        assert not check_step_condition(R, S, 1.2, 1.0)   # 1/0.99 - 1.2 < 0

    def test_matches_dense_eigenvalue(self):
        d_r = np.array([2.0, 1.5, 1.01])
        d_s = np.array([1.0, 1.0, 1.0])
        R = DiagonalMetric(d_r)
        S = DiagonalMetric(d_s)
        tau, lam = 0.7, 1.4
        expected = np.min(d_r - tau * lam / d_s) > 0
        assert check_step_condition(R, S, tau, lam) == expected
