"""Tests for the TV-L1 deblurring problem assembly."""

import numpy as np
import pytest

from pdsaddle import pdcore, tvl1
from pdsaddle.errors import (ConfigurationError, InfeasibleDualError,
                             InvalidKernelError)
from pdsaddle.operators import check_step_condition, estimate_norm
from pdsaddle.tvl1 import (DualPair, build_inner, dual_update, initial_point,
                           make_blur, make_gradient, make_saddle, make_tvl1,
                           objective, saddle_objective)


def rand_image(rows=6, cols=5, seed=0):
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(rows, cols))


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("boundary", ["periodic", "neumann"])
def test_gradient_adjoint_pairs(boundary):
    D = make_gradient(5, 7, boundary)
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.standard_normal(D.in_dim)
        y = rng.standard_normal(D.out_dim)
        assert float(D.apply(x) @ y) == pytest.approx(
            float(x @ D.adjoint_apply(y)), abs=1e-12)


@pytest.mark.parametrize("boundary", ["periodic", "neumann"])
def test_blur_adjoint_pairs(boundary):
    K = make_blur(6, 6, 3, boundary)
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.standard_normal(K.in_dim)
        y = rng.standard_normal(K.out_dim)
        assert float(K.apply(x) @ y) == pytest.approx(
            float(x @ K.adjoint_apply(y)), abs=1e-12)


def test_gradient_constant_image_vanishes():
    for boundary in ("periodic", "neumann"):
        D = make_gradient(4, 4, boundary)
        assert np.allclose(D.apply(np.full(16, 3.7)), 0.0, atol=1e-14)


def test_gradient_norm_bound_periodic():
    D = make_gradient(16, 16, "periodic")
    est = estimate_norm(D, iters=300, seed=0)
    assert est <= np.sqrt(8.0) + 1e-9


@pytest.mark.parametrize("boundary", ["periodic", "neumann"])
def test_blur_preserves_constants(boundary):
    K = make_blur(7, 5, 3, boundary)
    out = K.apply(np.full(35, 2.0))
    assert np.allclose(out, 2.0, atol=1e-12)


def test_blur_periodic_matches_direct_convolution():
    K = make_blur(5, 5, 3, "periodic")
    rng = np.random.default_rng(3)
    img = rng.standard_normal((5, 5))
    out = K.apply(img.ravel()).reshape(5, 5)
    direct = np.zeros((5, 5))
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            direct += np.roll(np.roll(img, di, axis=0), dj, axis=1)
    assert np.allclose(out, direct / 9.0, atol=1e-12)


def test_blur_rejects_even_or_nonpositive_kernel():
    with pytest.raises(InvalidKernelError):
        make_blur(4, 4, 4)
    with pytest.raises(InvalidKernelError):
        make_blur(4, 4, 0)


def test_unknown_boundary_rejected():
    with pytest.raises(ConfigurationError):
        make_gradient(4, 4, "dirichlet")
    with pytest.raises(ConfigurationError):
        make_blur(4, 4, 3, "dirichlet")


# ---------------------------------------------------------------------------
# problem assembly
# ---------------------------------------------------------------------------

def test_make_tvl1_defaults_and_step_condition():
    P = make_tvl1(rand_image(), hsize=3, mu=0.1)
    assert P.gamma1 == pytest.approx(0.05)
    assert P.gamma2 == pytest.approx(0.05)
    assert P.r1 == pytest.approx(0.99 / P.s1)
    assert P.r2 == pytest.approx(0.99 / P.s2)
    assert check_step_condition(P.R, P.S, 1.0, 1.0)


def test_make_tvl1_rejects_bad_config():
    img = rand_image()
    with pytest.raises(ConfigurationError):
        make_tvl1(img, mu=0.0)
    with pytest.raises(ConfigurationError):
        make_tvl1(img, mu=0.1, gamma1=0.1)
    with pytest.raises(ConfigurationError):
        make_tvl1(img.ravel())
    with pytest.raises(ConfigurationError):
        make_tvl1(img, s1=-1.0)


@pytest.mark.parametrize("boundary", ["periodic", "neumann"])
def test_normal_metric_matches_stacked_operator(boundary):
    P = make_tvl1(rand_image(5, 4, seed=4), hsize=3, boundary=boundary)
    rng = np.random.default_rng(5)
    for _ in range(5):
        x = rng.standard_normal(P.B.in_dim)
        assert np.allclose(P.BtB.apply(x), P.B.adjoint_apply(P.B.apply(x)),
                           atol=1e-10)
        assert np.allclose(P.BtB.inverse_apply(P.BtB.apply(x)), x, atol=1e-8)


def test_objective_manual_formula():
    P = make_tvl1(rand_image(seed=6), hsize=3, mu=0.07)
    x = np.random.default_rng(7).standard_normal(P.K.in_dim)
    manual = (np.abs(P.K.apply(x) - P.f_flat).sum()
              + 0.07 * np.abs(P.Dgrad.apply(x)).sum())
    assert objective(P, x) == pytest.approx(manual, rel=1e-12)


def test_saddle_objective_manual_formula_and_feasibility():
    P = make_tvl1(rand_image(seed=8), hsize=3, mu=0.1)
    rng = np.random.default_rng(9)
    x = rng.standard_normal(P.K.in_dim)
    u = rng.uniform(-1.0, 1.0, P.K.out_dim)
    v = rng.uniform(-P.gamma2, P.gamma2, P.Dgrad.out_dim)
    dx = P.Dgrad.apply(x)
    manual = (P.gamma1 * np.abs(dx).sum()
              + (P.K.apply(x) - P.f_flat) @ u + dx @ v)
    assert saddle_objective(P, x, DualPair(u, v)) == pytest.approx(
        manual, rel=1e-12)
    with pytest.raises(InfeasibleDualError):
        saddle_objective(P, x, DualPair(2.0 * np.ones_like(u), v))
    with pytest.raises(InfeasibleDualError):
        saddle_objective(P, x, DualPair(u, 2.0 * P.gamma2 * np.ones_like(v)))


def test_saddle_supremum_recovers_objective():
    # sup over the feasible dual of L(x, .) must equal F(x)
    P = make_tvl1(rand_image(seed=20), hsize=3, mu=0.1, gamma1=0.03)
    x = np.random.default_rng(21).standard_normal(P.K.in_dim)
    u_star = np.sign(P.K.apply(x) - P.f_flat)
    v_star = P.gamma2 * np.sign(P.Dgrad.apply(x))
    assert saddle_objective(P, x, DualPair(u_star, v_star)) == pytest.approx(
        objective(P, x), rel=1e-12)


def test_dual_update_is_componentwise_clamp():
    P = make_tvl1(rand_image(seed=10), hsize=3, mu=0.1)
    rng = np.random.default_rng(11)
    x = rng.standard_normal(P.K.in_dim)
    prev = DualPair(u=rng.uniform(-1, 1, P.K.out_dim),
                    v=rng.uniform(-P.gamma2, P.gamma2, P.Dgrad.out_dim))
    new = dual_update(P, prev, x)
    assert np.allclose(
        new.u, np.clip(prev.u + P.s1 * (P.K.apply(x) - P.f_flat), -1, 1))
    assert np.allclose(
        new.v, np.clip(prev.v + P.s2 * P.Dgrad.apply(x),
                       -P.gamma2, P.gamma2))
    assert np.max(np.abs(new.u)) <= 1.0
    assert np.max(np.abs(new.v)) <= P.gamma2


def test_build_inner_center_solves_normal_equations():
    P = make_tvl1(rand_image(seed=12), hsize=3, mu=0.1)
    rng = np.random.default_rng(13)
    x = rng.standard_normal(P.K.in_dim)
    dual = DualPair(u=rng.uniform(-1, 1, P.K.out_dim),
                    v=rng.uniform(-P.gamma2, P.gamma2, P.Dgrad.out_dim))
    ip = build_inner(P, x, dual)
    assert np.allclose(P.BtB.apply(ip.z), P.B.adjoint_apply(ip.xi), atol=1e-9)


def test_saddle_prediction_matches_closed_form_dual_update():
    # the g-prox of the wired saddle problem must reproduce the clamp
    P = make_tvl1(rand_image(seed=14), hsize=3, mu=0.1)
    sp = make_saddle(P)
    x0, y0 = initial_point(P)
    st = pdcore.init_state(x0, y0)
    st = pdcore.outer_step_exact(P=sp, st=st, sched=pdcore.ToleranceSchedule())
    expected = dual_update(P, P.split_dual(y0), x0)
    got = P.split_dual(st.y)
    assert np.allclose(got.u, expected.u, atol=1e-12)
    assert np.allclose(got.v, expected.v, atol=1e-12)


def test_initial_point_is_observed_image_and_zero_dual():
    P = make_tvl1(rand_image(seed=15), hsize=3)
    x0, y0 = initial_point(P)
    assert np.array_equal(x0, P.f_flat)
    assert np.array_equal(y0, np.zeros(P.A.out_dim))


def test_objective_decreases_under_exact_solver():
    P = make_tvl1(rand_image(8, 8, seed=16), hsize=3, mu=0.1)
    sp = make_saddle(P)
    x0, y0 = initial_point(P)
    rec = pdcore.run_solver(sp, "pd_exact", pdcore.ToleranceSchedule(),
                            pdcore.StoppingRule(max_iters=30), x0, y0)
    obj = rec.column("objective")
    assert obj[-1] < objective(P, x0)
    assert np.isfinite(obj).all()


def test_split_dual_roundtrip():
    P = make_tvl1(rand_image(seed=17), hsize=3)
    y = np.arange(float(P.A.out_dim))
    pair = P.split_dual(y)
    assert np.array_equal(pair.stacked(), y)
