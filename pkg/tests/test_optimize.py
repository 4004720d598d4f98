"""Optimizer behavior against closed-form updates, constrained training on
hyperspheres, and random-subspace training."""

import numpy as np
import pytest

from pinnscape import network, problems
from pinnscape.errors import ConfigurationError, TrainingAborted
from pinnscape.optimize import (OptimizerConfig, SubspaceMap, train,
                                train_on_sphere, train_subspace)
from pinnscape.runio import labeled_rng

from conftest import QuadraticObjective


def _quadratic(n=4, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    return QuadraticObjective(scale * (M @ M.T + n * np.eye(n)))


def test_gd_on_isotropic_quadratic_matches_closed_form():
    # loss = 0.5||theta||^2 -> theta_t = (1 - lr)^t theta_0
    obj = QuadraticObjective(np.eye(3))
    theta0 = np.array([1.0, -2.0, 0.5])
    cfg = OptimizerConfig(kind="gd", lr=0.1, epochs=25)
    rec = train(obj, theta0, cfg)
    np.testing.assert_allclose(rec.final_params, 0.9 ** 25 * theta0, rtol=1e-12)
    assert rec.losses.size == 26
    np.testing.assert_allclose(rec.losses[0], obj.evaluate(theta0), rtol=1e-12)
    assert np.all(np.diff(rec.losses) <= 0)


def test_adam_first_step_is_signed_lr():
    obj = QuadraticObjective(np.diag([1.0, 4.0]))
    theta0 = np.array([3.0, -2.0])
    cfg = OptimizerConfig(kind="adam", lr=0.01, epochs=1)
    rec = train(obj, theta0, cfg)
    g = np.diag([1.0, 4.0]) @ theta0
    expected = theta0 - 0.01 * np.sign(g) * (np.abs(g) / (np.abs(g) + 1e-8))
    np.testing.assert_allclose(rec.final_params, expected, rtol=1e-9)


def test_adam_moment_recursion_two_steps():
    # replicate the bias-corrected update by hand for 2 steps
    Q = np.diag([2.0, 0.5])
    obj = QuadraticObjective(Q)
    theta = np.array([1.0, 1.0])
    cfg = OptimizerConfig(kind="adam", lr=0.1, epochs=2)
    rec = train(obj, theta.copy(), cfg)
    m = np.zeros(2)
    v = np.zeros(2)
    for t in range(1, 3):
        g = Q @ theta
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta = theta - 0.1 * (m / (1 - 0.9 ** t)) / (
            np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(rec.final_params, theta, rtol=1e-12)


def test_trajectory_record_shapes_and_thinning():
    obj = _quadratic()
    theta0 = np.ones(4)
    rec = train(obj, theta0, OptimizerConfig(kind="gd", lr=0.01, epochs=10,
                                             record_every=3))
    # rows at epochs 0,3,6,9 plus the forced final row at 10
    np.testing.assert_array_equal(rec.epochs_recorded, [0, 3, 6, 9, 10])
    assert rec.params.shape == (5, 4)
    assert rec.losses.size == 11
    assert rec.radii.size == 11
    np.testing.assert_allclose(rec.radii[0], np.linalg.norm(theta0))


def test_training_is_bit_reproducible():
    obj = problems.make_objective("elliptic1d", "drm")
    theta0 = network.init_params(obj.spec, seed=5, scale=1.0)
    cfg = OptimizerConfig(kind="adam", lr=1e-3, epochs=40)
    a = train(obj, theta0, cfg)
    b = train(obj, theta0, cfg)
    assert np.array_equal(a.params, b.params)
    assert np.array_equal(a.losses, b.losses)


def test_training_aborts_on_nonfinite_with_partial_record():
    obj = problems.make_objective("neohookean2d", "drm")
    # diverge on purpose: huge learning rate inverts the material quickly
    theta0 = network.init_params(obj.spec, seed=0, scale=1.0)
    with pytest.raises(TrainingAborted) as exc:
        train(obj, theta0, OptimizerConfig(kind="gd", lr=1e4, epochs=50))
    rec = exc.value.record
    assert exc.value.epoch < 50
    assert np.isnan(rec.losses[-1])
    assert np.all(np.isfinite(rec.losses[:-1]))


def test_sphere_training_norm_exact_every_step():
    obj = _quadratic(n=6, seed=3)
    theta0 = np.random.default_rng(0).standard_normal(6)
    radius = 2.5
    norms = []
    rec = train_on_sphere(obj, theta0, OptimizerConfig(kind="adam", lr=0.05,
                                                       epochs=30), radius,
                          callback=lambda e, p, l: norms.append(
                              np.linalg.norm(p)))
    np.testing.assert_allclose(norms, radius, rtol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(rec.final_params), radius,
                               rtol=1e-12)


def test_sphere_training_rejects_bad_radius():
    obj = _quadratic()
    with pytest.raises(ConfigurationError):
        train_on_sphere(obj, np.ones(4), OptimizerConfig(epochs=1), 0.0)
    with pytest.raises(ConfigurationError):
        train_on_sphere(obj, np.zeros(4), OptimizerConfig(epochs=1), 1.0)


def test_full_rank_subspace_reaches_unconstrained_minimum():
    # a full-rank (square) projection leaves the minimum reachable, so
    # subspace training must approach the same zero loss as ambient training
    obj = QuadraticObjective(np.eye(5))
    theta0 = np.random.default_rng(1).standard_normal(5)
    sub = SubspaceMap(theta0, 5, np.random.default_rng(2))
    cfg = OptimizerConfig(kind="adam", lr=0.05, epochs=1500)
    rec_sub = train_subspace(obj, sub, cfg)
    rec_full = train(obj, theta0.copy(), cfg)
    assert rec_sub.final_loss < 0.01 * obj.evaluate(theta0)
    assert rec_full.final_loss < 0.01 * obj.evaluate(theta0)


def test_subspace_map_properties():
    theta0 = np.zeros(10)
    sub = SubspaceMap(theta0, 3, np.random.default_rng(0))
    assert sub.P.shape == (10, 3)
    np.testing.assert_allclose(np.linalg.norm(sub.P, axis=0), 1.0, rtol=1e-12)
    z = np.array([1.0, 2.0, -1.0])
    np.testing.assert_allclose(sub.embed(z), sub.P @ z)
    g = np.random.default_rng(1).standard_normal(10)
    np.testing.assert_allclose(sub.pull_gradient(g), sub.P.T @ g)
    with pytest.raises(ConfigurationError):
        SubspaceMap(theta0, 0, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        SubspaceMap(theta0, 11, np.random.default_rng(0))


def test_subspace_training_stays_in_affine_subspace():
    obj = _quadratic(n=8, seed=4)
    theta0 = np.random.default_rng(5).standard_normal(8)
    sub = SubspaceMap(theta0, 2, np.random.default_rng(6))
    rec = train_subspace(obj, sub, OptimizerConfig(kind="adam", lr=0.05,
                                                   epochs=50))
    dev = rec.final_params - theta0
    # residual after projecting onto span(P) must vanish
    coeff, *_ = np.linalg.lstsq(sub.P, dev, rcond=None)
    np.testing.assert_allclose(sub.P @ coeff, dev, atol=1e-10)


def test_optimizer_config_validation():
    with pytest.raises(ConfigurationError):
        OptimizerConfig(kind="rmsprop")
    with pytest.raises(ConfigurationError):
        OptimizerConfig(lr=0.0)
    with pytest.raises(ConfigurationError):
        OptimizerConfig(record_every=0)
