"""Quadrature, manufactured solutions, sources, stress kinematics, and the
four objective functions."""

import numpy as np
import pytest
import sympy as sp

from pinnscape import network, problems
from pinnscape.errors import ConfigurationError
from pinnscape.problems import (Objective, body_force_2d, integrand_variance,
                                make_objective, manufactured_1d,
                                manufactured_2d, polar_grid, source_1d,
                                uniform_grid_1d)
from pinnscape.runio import labeled_rng


# ---------------------------------------------------------------------------
# grids


def test_uniform_grid_midpoints_and_weights():
    g = uniform_grid_1d(100)
    np.testing.assert_allclose(g.points[0, 0], 0.005)
    np.testing.assert_allclose(g.points[-1, 0], 0.995)
    np.testing.assert_allclose(g.weights.sum(), 1.0)
    # integrates quadratics with midpoint-rule accuracy
    val = np.sum(g.weights * g.points[:, 0] ** 2)
    assert abs(val - 1.0 / 3.0) < 1e-4


def test_polar_grid_weights_sum_to_disk_area():
    g = polar_grid()
    np.testing.assert_allclose(g.weights.sum(), np.pi, rtol=1e-12)
    radii = np.linalg.norm(g.points, axis=1)
    assert radii.max() < 1.0
    # integral of r^2 over unit disk = pi/2
    val = np.sum(g.weights * radii ** 2)
    assert abs(val - np.pi / 2) < 5e-3


# ---------------------------------------------------------------------------
# manufactured solutions and sources (sympy oracles)


def test_source_1d_against_sympy():
    x = sp.symbols("x")
    u = -2 * x * sp.sin(2 * sp.pi * x)
    f = sp.lambdify(x, -sp.diff(u, x, 2), "numpy")
    xs = np.linspace(0.01, 0.99, 57)
    np.testing.assert_allclose(source_1d(xs), f(xs), rtol=1e-12)


def test_source_1d_spot_values():
    np.testing.assert_allclose(source_1d(0.0), 8 * np.pi, rtol=1e-14)
    np.testing.assert_allclose(source_1d(0.25), -2 * np.pi ** 2, rtol=1e-14)
    np.testing.assert_allclose(source_1d(0.5), -8 * np.pi, rtol=1e-14)


def test_manufactured_1d_boundary_zero():
    np.testing.assert_allclose(manufactured_1d([0.0, 1.0]), 0.0, atol=1e-15)


def test_manufactured_2d_boundary_zero_and_tangential():
    th = np.linspace(0, 2 * np.pi, 9)
    pts = np.stack([np.cos(th), np.sin(th)], axis=1)
    np.testing.assert_allclose(manufactured_2d(pts), 0.0, atol=1e-14)
    inner = np.array([[0.3, 0.4]])
    u = manufactured_2d(inner)[0]
    # torsional: u orthogonal to the position vector
    assert abs(np.dot(u, inner[0])) < 1e-14


def _sympy_body_force(l1, l2, alpha):
    X1, X2 = sp.symbols("X1 X2")
    r2 = X1 ** 2 + X2 ** 2
    s = alpha * r2 * (1 - r2)
    u = sp.Matrix([-s * X2, s * X1])
    F = sp.eye(2) + u.jacobian([X1, X2])
    J = F.det()
    Finv_t = F.inv().T
    P = l1 * (F - Finv_t) + l2 * sp.log(J) * Finv_t
    b0 = -(sp.diff(P[0, 0], X1) + sp.diff(P[0, 1], X2))
    b1 = -(sp.diff(P[1, 0], X1) + sp.diff(P[1, 1], X2))
    return sp.lambdify((X1, X2), (b0, b1), "numpy")


def test_body_force_against_sympy():
    fn = _sympy_body_force(1.0, 0.25, 1.0)
    rng = np.random.default_rng(0)
    r = np.sqrt(rng.uniform(0, 1, 40)) * 0.95
    th = rng.uniform(0, 2 * np.pi, 40)
    pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    got = body_force_2d(pts)
    b0, b1 = fn(pts[:, 0], pts[:, 1])
    np.testing.assert_allclose(got[:, 0], b0, rtol=1e-9, atol=1e-10)
    np.testing.assert_allclose(got[:, 1], b1, rtol=1e-9, atol=1e-10)


def test_body_force_rotational_equivariance():
    # the torsional setup is rotationally symmetric: B(Rx) = R B(x)
    ang = 0.7
    R = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    pts = np.array([[0.3, 0.1], [0.5, -0.4]])
    lhs = body_force_2d(pts @ R.T)
    rhs = body_force_2d(pts) @ R.T
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)


# ---------------------------------------------------------------------------
# objectives


def test_objective_validation():
    spec = problems.default_spec_1d()
    grid = uniform_grid_1d()
    with pytest.raises(ConfigurationError):
        Objective(kind="nope", spec=spec, grid=grid)
    with pytest.raises(ConfigurationError):
        Objective(kind="drm2d", spec=spec, grid=grid)
    with pytest.raises(ConfigurationError):
        make_objective("elliptic1d", "weak")
    with pytest.raises(ConfigurationError):
        make_objective("poisson3d", "drm")


def test_drm1d_loss_at_manufactured_solution_is_energy_minimum():
    # theta representing approx the true solution should have lower energy
    # than the zero field, whose energy is 0 by construction
    obj = make_objective("elliptic1d", "drm")
    zero = obj.evaluate(np.zeros(obj.n_params))
    np.testing.assert_allclose(zero, 0.0, atol=1e-12)


def test_pinn1d_zero_field_loss_is_half_source_norm():
    obj = make_objective("elliptic1d", "pinn")
    expect = 0.5 * np.sum(obj.grid.weights * source_1d(obj.grid.points[:, 0]) ** 2)
    np.testing.assert_allclose(obj.evaluate(np.zeros(obj.n_params)), expect,
                               rtol=1e-12)


def test_drm2d_zero_field_loss_is_zero():
    obj = make_objective("neohookean2d", "drm")
    # F = I, J = 1, no displacement: strain energy and body-force work vanish
    np.testing.assert_allclose(obj.evaluate(np.zeros(obj.n_params)), 0.0,
                               atol=1e-12)


def test_pinn2d_zero_field_loss_is_half_body_force_norm():
    obj = make_objective("neohookean2d", "pinn")
    B = body_force_2d(obj.grid.points)
    expect = 0.5 * np.sum(obj.grid.weights * np.sum(B * B, axis=1))
    np.testing.assert_allclose(obj.evaluate(np.zeros(obj.n_params)), expect,
                               rtol=1e-10)


def test_evaluate_returns_nan_not_raise_on_inversion():
    obj = make_objective("neohookean2d", "drm")
    theta = network.init_params(obj.spec, seed=1, scale=1.0)
    val = obj.evaluate(theta)
    assert np.isnan(val)
    bad = obj.locate_bad_point(theta)
    assert bad is not None and bad.shape == (2,)


def test_clamp_keeps_inverted_state_finite():
    clamped = make_objective("neohookean2d", "drm", clamp=1e-6)
    theta = network.init_params(clamped.spec, seed=1, scale=1.0)
    assert np.isfinite(clamped.evaluate(theta))


def test_monte_carlo_unbiased_1d():
    fixed = make_objective("elliptic1d", "drm")
    theta = network.init_params(fixed.spec, seed=0, scale=1.0)
    ref = fixed.evaluate(theta)
    mc = make_objective("elliptic1d", "drm", mode="monte_carlo", batch=100,
                        rng=labeled_rng(0, "mc-test"))
    draws = np.array([mc.evaluate(theta) for _ in range(400)])
    # standard error of the mean bounds the deviation
    sem = draws.std() / np.sqrt(draws.size)
    assert abs(draws.mean() - ref) < 5 * sem + 1e-3
    assert draws.std() > 0


def test_monte_carlo_2d_weights_integrate_area():
    mc = make_objective("neohookean2d", "drm", mode="monte_carlo", batch=64,
                        rng=labeled_rng(1, "mc-test"))
    pts, w, src = mc._sample()
    assert pts.shape == (64, 2)
    np.testing.assert_allclose(w.sum(), np.pi, rtol=1e-12)
    assert np.all(np.linalg.norm(pts, axis=1) <= 1.0)


def test_monte_carlo_requires_rng():
    with pytest.raises(ConfigurationError):
        make_objective("elliptic1d", "drm", mode="monte_carlo").evaluate(
            np.zeros(480))


def test_integrand_variance_constant_integrand_is_zero():
    obj = make_objective("elliptic1d", "pinn",
                         source_override=lambda pts: np.ones(pts.shape[0]))
    # zero field + unit source: integrand = 1/2 everywhere
    var = integrand_variance(obj, np.zeros(obj.n_params))
    np.testing.assert_allclose(var, 0.0, atol=1e-14)


def test_integrand_variance_matches_direct_formula():
    obj = make_objective("elliptic1d", "drm")
    theta = network.init_params(obj.spec, seed=2, scale=1.0)
    g = obj.integrand_values(theta)
    w = obj.grid.weights
    expect = np.sum(w * g * g) - np.sum(w * g) ** 2
    np.testing.assert_allclose(integrand_variance(obj, theta), expect,
                               rtol=1e-12)


def test_source_override_changes_objective():
    obj = make_objective("elliptic1d", "pinn",
                         source_override=lambda pts: np.zeros(pts.shape[0]))
    np.testing.assert_allclose(obj.evaluate(np.zeros(obj.n_params)), 0.0,
                               atol=1e-15)
