import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq, minimize

from holdertensor import (
    CompositePart,
    ModelSpec,
    PsiState,
    SmoothOracle,
    SubsolverConfig,
    SubsolverError,
    check_certificate,
    model_gradient,
    model_value,
    solve_at_coefficient,
    solve_model,
    solve_model_generic,
    solve_model_order2,
    solve_psi,
    zoo,
)
from holdertensor.metric import MetricSpace
from holdertensor.subsolver import psi_stationarity_residual


def quartic_1d():
    def action(x, h, i):
        return x ** 2 * h if i == 2 else 2.0 * x * h * h

    return SmoothOracle(lambda x: float(x[0] ** 4 / 12), lambda x: x ** 3 / 3, action, 2,
                        dimension=1)


def quartic_sum(n):
    # f(x) = sum x_i^4 / 4
    def action(x, h, i):
        return 3.0 * x ** 2 * h if i == 2 else 6.0 * x * h * h

    return SmoothOracle(lambda x: float(np.sum(x ** 4)) / 4.0, lambda x: x ** 3, action, 3,
                        dimension=n, hessian=lambda x: np.diag(3.0 * x ** 2))


class TestSubsolverConfig:
    @pytest.mark.parametrize("kwargs", [dict(theta=-1.0), dict(max_inner_iterations=0),
                                        dict(inner_tolerance=0.0), dict(radial_tolerance=0.0)])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            SubsolverConfig(**kwargs)


class TestOrder2:
    def test_quadratic_against_radial_system(self, rng):
        Q = np.diag([1.0, 2.0, 4.0])
        b = rng.standard_normal(3)
        f = zoo("quadratic", 3, Q=Q, b=b)
        H = 0.05
        spec = ModelSpec(np.zeros(3), 2, H, 1.0)
        x_plus, cert = solve_model_order2(spec, f, SubsolverConfig(theta=1e-8))
        assert cert.accepted
        # independent radial solve: r = ||(Q + c r I)^{-1} b||, c = 3H/2
        c = 1.5 * H
        r = brentq(lambda r: np.linalg.norm(np.linalg.solve(Q + c * r * np.eye(3), b)) - r,
                   0.0, 10.0 * np.linalg.norm(b), xtol=1e-15)
        np.testing.assert_allclose(x_plus, np.linalg.solve(Q + c * r * np.eye(3), b),
                                   atol=1e-10)
        assert np.linalg.norm(x_plus - np.linalg.solve(Q, b)) < 0.2 * np.linalg.norm(b)

    def test_stationary_center(self):
        f = zoo("quadratic", 3)
        x_plus, cert = solve_model_order2(ModelSpec(np.zeros(3), 2, 1.0, 1.0), f,
                                          SubsolverConfig(theta=0.0))
        assert np.all(x_plus == 0.0) and cert.accepted

    def test_quartic_grid(self):
        f = quartic_1d()
        spec = ModelSpec(np.array([1.0]), 2, 2.0, 1.0)
        x_plus, cert = solve_model_order2(spec, f, SubsolverConfig(theta=1e-10))
        grid = np.linspace(-1.0, 1.0, 2000001)
        vals = [model_value(spec, f, np.array([y])) for y in grid[::1000]]
        coarse = grid[::1000][int(np.argmin(vals))]
        fine = np.linspace(coarse - 2e-3, coarse + 2e-3, 40001)
        best = fine[int(np.argmin([model_value(spec, f, np.array([y])) for y in fine]))]
        assert abs(x_plus[0] - best) <= 1e-6
        assert cert.accepted

    def test_rejects_composite_and_order3(self):
        f = quartic_sum(2)
        with pytest.raises(ValueError):
            solve_model_order2(ModelSpec(np.zeros(2), 3, 1.0, 1.0), f, SubsolverConfig())
        spec = ModelSpec(np.zeros(2), 2, 1.0, 1.0, CompositePart.l1(1.0))
        with pytest.raises(ValueError):
            solve_model_order2(spec, f, SubsolverConfig())

    def test_indefinite_hessian(self):
        # f(x) = -x1^2/2 + x2^2/2 + x1: the cubic model still has a global minimizer
        f = SmoothOracle(lambda x: -0.5 * x[0] ** 2 + 0.5 * x[1] ** 2 + x[0],
                         lambda x: np.array([1.0 - x[0], x[1]]),
                         lambda x, h, i: np.array([-h[0], h[1]]), 2, dimension=2,
                         convex=False)
        spec = ModelSpec(np.zeros(2), 2, 1.0, 1.0)
        x_plus, cert = solve_model_order2(spec, f, SubsolverConfig(theta=1e-10))
        assert cert.accepted
        ref = minimize(lambda y: model_value(spec, f, y), np.array([-1.0, 0.1]), tol=1e-14)
        assert model_value(spec, f, x_plus) <= ref.fun + 1e-10

    def test_weighted_metric(self, rng):
        B = np.array([[3.0, 0.5], [0.5, 1.0]])
        space = MetricSpace(2, B)
        b = rng.standard_normal(2)
        f = SmoothOracle(lambda x: 0.5 * float(x @ x) - float(b @ x), lambda x: x - b,
                         lambda x, h, i: h.copy(), 2, space=space)
        spec = ModelSpec(np.zeros(2), 2, 1.0, 0.5)
        x_plus, cert = solve_model_order2(spec, f, SubsolverConfig(theta=1e-10))
        assert cert.accepted
        ref = minimize(lambda y: model_value(spec, f, y), np.zeros(2), method="Nelder-Mead",
                       options=dict(xatol=1e-12, fatol=1e-15, maxiter=20000))
        np.testing.assert_allclose(x_plus, ref.x, atol=1e-6)


class TestGeneric:
    def test_huge_H_stays_near_center(self, rng):
        f = quartic_sum(3)
        x = rng.standard_normal(3)
        spec = ModelSpec(x, 3, 1e8, 1.0)
        x_plus, cert = solve_model_generic(spec, f, None, SubsolverConfig())
        assert cert.accepted
        assert np.linalg.norm(x_plus - x) < 1e-2

    def test_order3_against_scipy(self, rng):
        f = quartic_sum(4)
        x = rng.standard_normal(4)
        spec = ModelSpec(x, 3, 6.0, 1.0)
        x_plus, cert = solve_model_generic(spec, f, None, SubsolverConfig(theta=1e-10))
        assert cert.accepted
        ref = minimize(lambda y: model_value(spec, f, y), x, method="BFGS",
                       jac=lambda y: model_gradient(spec, f, y),
                       options=dict(gtol=1e-13, maxiter=10000))
        np.testing.assert_allclose(x_plus, ref.x, atol=1e-5)

    def test_box_certificate(self, rng):
        f = zoo("quadratic", 4, b=5.0 * rng.standard_normal(4))
        box = CompositePart.box(-np.ones(4), np.ones(4))
        spec = ModelSpec(np.zeros(4), 2, 1.0, 1.0, box)
        x_plus, cert = solve_model_generic(spec, f, box, SubsolverConfig(theta=1e-6))
        assert box.contains(x_plus)
        assert np.any(np.abs(x_plus) == 1.0)
        again = check_certificate(spec, f, x_plus, cert.g_phi, 1e-6)
        assert again.accepted
        assert again.model_grad_plus_subgrad_norm <= 1e-6 * again.step_norm ** 2 \
            + again.rounding_allowance

    def test_l1_matches_scipy(self, rng):
        f = zoo("quadratic", 3, Q=np.diag([1.0, 2.0, 3.0]), b=np.array([2.0, -0.1, 1.5]))
        phi = CompositePart.l1(0.5)
        spec = ModelSpec(np.zeros(3), 2, 1.0, 1.0, phi)
        x_plus, cert = solve_model_generic(spec, f, phi, SubsolverConfig(theta=1e-10))
        assert cert.accepted
        assert x_plus[1] == 0.0
        ref = minimize(lambda y: model_value(spec, f, y), x_plus + 0.01, method="Nelder-Mead",
                       options=dict(xatol=1e-12, fatol=1e-15, maxiter=40000))
        assert model_value(spec, f, x_plus) <= ref.fun + 1e-12

    def test_agrees_with_order2(self, rng):
        for _ in range(5):
            A = rng.standard_normal((4, 4))
            f = zoo("quadratic", 4, Q=A @ A.T + 0.1 * np.eye(4), b=rng.standard_normal(4))
            spec = ModelSpec(rng.standard_normal(4), 2, rng.uniform(0.1, 5.0), 1.0)
            cfg = SubsolverConfig(theta=1e-10)
            a, _ = solve_model_order2(spec, f, cfg)
            b, _ = solve_model_generic(spec, f, None, cfg)
            np.testing.assert_allclose(a, b, atol=1e-6)

    def test_dispatch(self, rng):
        f = zoo("quadratic", 2, b=np.ones(2))
        spec = ModelSpec(np.zeros(2), 2, 1.0, 1.0)
        a, _ = solve_model(spec, f, CompositePart.zero(), SubsolverConfig())
        b, _ = solve_model_order2(spec, f, SubsolverConfig())
        np.testing.assert_array_equal(a, b)

    def test_vanishing_hessian_at_center(self):
        # at the origin the chain function of degree 4 has zero second and third
        # derivatives, so the model is -y_1 + (4H/3!) ||y||^4 / 4
        f = zoo("hard", 5, k=5, p=3, nu=1.0)
        H = 3.0
        spec = ModelSpec(np.zeros(5), 3, H, 1.0)
        with np.errstate(all="raise"):
            x_plus, cert = solve_model_generic(spec, f, None, SubsolverConfig(theta=1e-10))
        assert cert.accepted
        expected = np.eye(5)[0] * (4.0 * H / 6.0) ** (-1.0 / 3.0)
        np.testing.assert_allclose(x_plus, expected, atol=1e-8)

    def test_budget_exhaustion(self, rng):
        f = quartic_sum(4)
        spec = ModelSpec(3.0 * np.ones(4), 3, 6.0, 1.0)
        with pytest.raises(SubsolverError, match="residual"):
            solve_model_generic(spec, f, None, SubsolverConfig(theta=0.0,
                                                               max_inner_iterations=1))


class TestAtCoefficient:
    def test_zero_accumulation(self):
        assert solve_at_coefficient(0.0, 1.0, 2, 3.0) == pytest.approx(1.0 / 32.0, rel=1e-15)

    def test_residual_against_bisection(self):
        a = solve_at_coefficient(1.0, 1.0, 2, 3.0)
        assert abs(a ** 3 - (1.0 + a) ** 2 / 32.0) < 1e-12
        ref = brentq(lambda s: s ** 3 - (1.0 + s) ** 2 / 32.0, 1e-6, 1.0, xtol=1e-16)
        assert a == pytest.approx(ref, rel=1e-13)

    def test_scaling_in_M(self):
        assert solve_at_coefficient(0.0, 2.0, 3, 3.5) == \
            pytest.approx(solve_at_coefficient(0.0, 1.0, 3, 3.5) / 2.0, rel=1e-15)

    @pytest.mark.parametrize("kwargs", [dict(M=0.0), dict(p=1), dict(A_t=-1.0)])
    def test_rejects(self, kwargs):
        args = dict(A_t=1.0, M=1.0, p=2, q=3.0)
        args.update(kwargs)
        with pytest.raises(ValueError):
            solve_at_coefficient(**args)

    @settings(max_examples=60)
    @given(st.floats(0.0, 1e8), st.floats(1e-3, 1e4), st.sampled_from([2, 3]),
           st.floats(0.0, 1.0))
    def test_residual_property(self, A, M, p, alpha):
        q = p + alpha
        a = solve_at_coefficient(A, M, p, q)
        c = math.factorial(p - 1) / (2.0 ** (3 * p - 1) * M)
        assert a > 0
        assert abs(a ** q - c * (A + a) ** (q - 1)) <= 1e-12 * max(1.0, a ** q)


class TestPsi:
    def test_zero_linear_term(self, rng):
        x0 = rng.standard_normal(3)
        state = PsiState.initial(x0, 3.0)
        np.testing.assert_array_equal(solve_psi(state, MetricSpace(3)), x0)

    def test_unit_linear_term(self):
        x0 = np.array([0.5, -1.0])
        state = PsiState(x0, 3.0, np.array([1.0, 0.0]))
        x = solve_psi(state, MetricSpace(2))
        np.testing.assert_allclose(x, x0 - np.array([1.0, 0.0]), atol=1e-15)
        assert psi_stationarity_residual(state, MetricSpace(2), x) <= 1e-15
        ref = minimize(lambda y: state.value(y, MetricSpace(2)), x0, tol=1e-14)
        np.testing.assert_allclose(x, ref.x, atol=1e-6)

    def test_initial_rejects_small_q(self):
        with pytest.raises(ValueError):
            PsiState.initial(np.zeros(2), 1.0)

    def test_accumulation(self):
        state = PsiState.initial(np.zeros(2), 3.0)
        state.add_linearization(2.0, 1.0, np.array([1.0, 2.0]), np.array([1.0, 1.0]))
        np.testing.assert_allclose(state.linear, [2.0, 4.0])
        assert state.constant == pytest.approx(2.0 * (1.0 - 3.0))
        other = state.copy()
        other.add_linearization(1.0, 0.0, np.ones(2), np.zeros(2), composite=True)
        assert state.composite_weight == 0.0 and other.composite_weight == 1.0

    def test_box_clipping(self):
        box = CompositePart.box(np.array([-0.5, -0.5]), np.array([0.5, 0.5]))
        state = PsiState(np.zeros(2), 3.0, np.array([2.0, -0.1]), composite_weight=1.0)
        x = solve_psi(state, MetricSpace(2), box)
        assert box.contains(x) and x[0] == pytest.approx(-0.5)
        assert psi_stationarity_residual(state, MetricSpace(2), x, box) < 1e-10
        grid = np.linspace(-0.5, 0.5, 1001)
        a, b = np.meshgrid(grid, grid, indexing="ij")
        vals = np.hypot(a, b) ** 3 / 3.0 + 2.0 * a - 0.1 * b
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        assert abs(x[0] - grid[i]) <= 1e-3 and abs(x[1] - grid[j]) <= 1e-3

    def test_l1(self, rng):
        phi = CompositePart.l1(1.0)
        state = PsiState(rng.standard_normal(3), 3.5, rng.standard_normal(3) * 3,
                         composite_weight=0.7)
        x = solve_psi(state, MetricSpace(3), phi)
        assert psi_stationarity_residual(state, MetricSpace(3), x, phi) < 1e-9

    def test_composite_needs_identity(self):
        state = PsiState(np.zeros(2), 3.0, np.ones(2), composite_weight=1.0)
        space = MetricSpace(2, np.diag([1.0, 2.0]))
        with pytest.raises(ValueError):
            solve_psi(state, space, CompositePart.l1(1.0))

    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=3),
           st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(2.0, 4.0))
    def test_smooth_stationarity(self, anchor, linear, q):
        B = np.array([[2.0, 0.2, 0.0], [0.2, 1.0, 0.1], [0.0, 0.1, 1.5]])
        space = MetricSpace(3, B)
        state = PsiState(np.array(anchor), q, np.array(linear))
        x = solve_psi(state, space)
        assert psi_stationarity_residual(state, space, x) <= 1e-9 * max(
            1.0, space.dual_norm(state.linear))
