import json
import warnings

import numpy as np
import pytest

from conftest import random_feasible
from elastica_scatter.energy import bending_energy
from elastica_scatter.errors import ConfigError, SelfIntersectionError
from elastica_scatter.geometry import (
    closure_defect,
    closure_jacobian,
    is_simple,
    reconstruct_polygon,
    regular_polygon,
    restore_feasibility,
)
from elastica_scatter.optimize import (
    ConvergenceWarning,
    SolverSettings,
    TikhonovProblem,
    _bordered,
    _hessian,
    _inertia,
    _local_model,
    add_noise,
    default_alpha,
    discrepancy_continuation,
    gauss_newton_step,
    line_search_and_restore,
    minimize_at_alpha,
    objective,
)
from elastica_scatter.sampling import FunctionIndicator, LevelLineOperator
from elastica_scatter.scatter import ScatterConfig, ScatteringOperator, far_field_map
from elastica_scatter.shapes import polygon_to_shape, shape_library


class LinearOperator:
    """``F(m) = A x`` on the ambient coordinate vector ``x``."""

    def __init__(self, matrix, weight=0.5):
        self.matrix = np.asarray(matrix, dtype=float)
        self.weight = weight

    def evaluate(self, m):
        return self.matrix @ m.to_vector()

    def linearize(self, m):
        return self.evaluate(m), self.matrix


def radial_indicator():
    return FunctionIndicator(lambda z: (z**2).sum(axis=1), lambda z: 2 * z)


def _tangent_basis(m):
    n = m.n
    cons = np.zeros((2, n + 3))
    cons[:, :n] = closure_jacobian(m)
    return np.linalg.svd(cons)[2][2:].T


def test_kkt_oracle_linear_operator():
    rng = np.random.default_rng(0)
    n = 10
    m = random_feasible(n, rng, amplitude=0.2)
    A = rng.normal(size=(30, n + 3))
    y = rng.normal(size=30)
    op = LinearOperator(A, weight=0.3)
    problem = TikhonovProblem(op, y, 0.0, m)
    settings = SolverSettings(metric_shift=0.0)
    # m is the rest shape, so the penalty has zero gradient and Hessian 2 D^T diag(1/h) D
    alpha = 0.7
    u, _ = gauss_newton_step(problem, m, alpha, settings)
    h = m.partition.dual_lengths
    D = np.roll(np.eye(n), 1, axis=1) - np.eye(n)
    H = 0.3 * A.T @ A
    H[:n, :n] += alpha * 2 * D.T @ (D / h[:, None])
    g = 0.3 * A.T @ (A @ m.to_vector() - y)
    Z = _tangent_basis(m)
    expected = -Z @ np.linalg.solve(Z.T @ H @ Z, Z.T @ g)
    np.testing.assert_allclose(u.to_vector(), expected, atol=1e-10 * np.linalg.norm(expected))
    # both block equations of the saddle point system
    cons = np.zeros((2, n + 3))
    cons[:, :n] = closure_jacobian(m)
    assert np.linalg.norm(cons @ u.to_vector()) <= 1e-10
    mu = np.linalg.lstsq(cons.T, -(H @ u.to_vector() + g), rcond=None)[0]
    kkt = H @ u.to_vector() + g + cons.T @ mu
    assert np.linalg.norm(kkt) <= 1e-9 * np.linalg.norm(g)


def test_stationary_point_gives_zero_step():
    rng = np.random.default_rng(1)
    m = random_feasible(12, rng)
    A = rng.normal(size=(25, 15))
    problem = TikhonovProblem(LinearOperator(A), A @ m.to_vector(), 0.0, m)
    u, _ = gauss_newton_step(problem, m, 0.5)
    assert np.linalg.norm(u.to_vector()) <= 1e-9


def test_gradient_metric_is_descent_on_random_instances():
    rng = np.random.default_rng(2)
    settings = SolverSettings(hessian_mode="gradient_metric")
    for _ in range(20):
        n = int(rng.integers(6, 25))
        m = random_feasible(n, rng, amplitude=0.3)
        rest = random_feasible(n, rng, amplitude=0.3)
        A = rng.normal(size=(int(rng.integers(3, 40)), n + 3))
        problem = TikhonovProblem(LinearOperator(A), rng.normal(size=A.shape[0]), 0.0, rest)
        alpha = float(10 ** rng.uniform(-3, 1))
        local = _local_model(problem, m, settings)
        u, _ = gauss_newton_step(problem, m, alpha, settings, local)
        assert np.dot(local.gradient(alpha), u.to_vector()) < 0
        mat, _ = _bordered(m, _hessian(problem, m, alpha, local, "gradient_metric"))
        assert _inertia(mat) == (n + 3, 2)


def test_objective_examples():
    cfg = ScatterConfig.equidistant(2.0, 4, 8, nystrom_points=64)
    truth = shape_library("ellipse", 30)
    problem = TikhonovProblem(ScatteringOperator(cfg), far_field_map(truth, cfg), 0.0, truth)
    assert objective(problem, truth, 0.0) == pytest.approx(0.0, abs=1e-25)
    other = shape_library("circle", 30, radius=0.8)
    half_res = 0.5 * problem.data_norm(problem.residual(other)) ** 2
    assert objective(problem, other, 0.0) == pytest.approx(half_res, rel=1e-14)
    pen = bending_energy(other, truth).value
    assert objective(problem, other, 2.0) == pytest.approx(half_res + 2.0 * pen, rel=1e-14)
    rest = TikhonovProblem(ScatteringOperator(cfg), far_field_map(truth, cfg), 0.0, other)
    assert objective(rest, other, 5.0) == pytest.approx(half_res, rel=1e-14)


def test_objective_self_intersection():
    t = 2 * np.pi * np.arange(40) / 40
    eight = polygon_to_shape(np.stack([np.sin(t), np.sin(t) * np.cos(t)], axis=1), 40)
    cfg = ScatterConfig.equidistant(2.0, 2, 4, nystrom_points=64)
    y = np.zeros(8)
    plain = TikhonovProblem(ScatteringOperator(cfg), y, 0.0, eight)
    with pytest.raises(SelfIntersectionError):
        objective(plain, eight, 1.0)
    barrier = TikhonovProblem(ScatteringOperator(cfg), y, 0.0, eight, penalty="bending_plus_mobius")
    assert objective(barrier, eight, 1.0) == float("inf")


def test_line_search_full_step_on_quadratic():
    rng = np.random.default_rng(3)
    m = random_feasible(12, rng, amplitude=0.1)
    target = random_feasible(12, rng, amplitude=0.1)
    A = np.eye(15)
    problem = TikhonovProblem(LinearOperator(A), target.to_vector() + 0.0, 0.0, m)
    # a short tangent step toward the minimizer passes Armijo at t = 1
    u, _ = gauss_newton_step(problem, m, 1e-3)
    u = 0.1 * u.to_vector()
    x = line_search_and_restore(problem, m, 1e-3, u)
    full = restore_feasibility(m.step(u), box=problem.box)
    np.testing.assert_allclose(x.to_vector(), full.to_vector(), atol=1e-14)


def test_line_search_zero_step_returns_input():
    m = regular_polygon(10)
    problem = TikhonovProblem(LinearOperator(np.eye(13)), np.zeros(13), 0.0, m)
    assert line_search_and_restore(problem, m, 1.0, np.zeros(13)) is m


def test_line_search_backtracks_out_of_self_intersection():
    # pinching the neck of a dumbbell by the full step makes the curve cross itself
    m = shape_library("peanut", 80, waist=0.9)
    v = reconstruct_polygon(m)[:-1]
    w = v.copy()
    w[:, 1] -= np.sign(v[:, 1]) * 0.3 * np.exp(-((v[:, 0] / 0.3) ** 2))
    chords = np.roll(w, -1, axis=0) - w
    theta = np.unwrap(np.arctan2(chords[:, 1], chords[:, 0]))
    theta += m.theta[0] - theta[0]
    u = np.concatenate([theta - m.theta, [np.linalg.norm(chords, axis=1).sum() - m.length], w[0] - v[0]])
    assert not is_simple(reconstruct_polygon(restore_feasibility(m.step(u))))
    # quadratic in the ambient vector: decreasing along u all the way to t = 1
    problem = TikhonovProblem(LinearOperator(np.eye(m.n + 3)), m.to_vector() + u, 0.0, m)
    x = line_search_and_restore(problem, m, 0.0, u)
    assert is_simple(reconstruct_polygon(x))
    assert np.linalg.norm(closure_defect(x)) <= 1e-10
    half = restore_feasibility(m.step(u, 0.5), box=problem.box)
    np.testing.assert_allclose(x.to_vector(), half.to_vector(), atol=1e-14)


@pytest.fixture(scope="module")
def small_disc_problem():
    cfg = ScatterConfig.equidistant(np.pi, 8, 8, nystrom_points=64, modes=32)
    truth = shape_library("circle", 40, radius=1.0, center=(0.1, 0.0))
    data, delta = add_noise(far_field_map(truth, cfg), 0.05, 1)
    m0 = shape_library("circle", 40, radius=0.7, center=(0.3, 0.2))
    return TikhonovProblem(ScatteringOperator(cfg), data, delta, m0), m0


def test_minimize_monotone_decrease(small_disc_problem):
    problem, m0 = small_disc_problem
    alpha = 10 * default_alpha(problem, m0)
    m, result = minimize_at_alpha(problem, m0, alpha)
    assert result.converged
    values = [objective(problem, m0, alpha)] + [r.objective for r in result.records]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    assert np.linalg.norm(closure_defect(m)) <= 1e-10
    assert is_simple(reconstruct_polygon(m))


def test_minimize_from_stationary_point(small_disc_problem):
    problem, m0 = small_disc_problem
    alpha = 10 * default_alpha(problem, m0)
    m, _ = minimize_at_alpha(problem, m0, alpha)
    _, again = minimize_at_alpha(problem, m, alpha)
    assert again.iterations <= 1


def test_zero_iterations_flagged(small_disc_problem):
    problem, m0 = small_disc_problem
    with pytest.warns(ConvergenceWarning):
        m, result = minimize_at_alpha(problem, m0, 1.0, SolverSettings(max_gn_iters=0))
    assert m is m0
    assert not result.converged


def test_large_noise_terminates_immediately(small_disc_problem):
    problem, m0 = small_disc_problem
    huge = TikhonovProblem(problem.forward, problem.data, 1e6, m0)
    m, alpha, trace = discrepancy_continuation(huge, m0)
    assert m is m0 and alpha == 0.0 and trace.converged


def _level_problem(noise, n=40):
    m0 = shape_library("ellipse", n, a=1.6, b=1.0)
    op = LevelLineOperator(radial_indicator(), n, scale=4.0)
    return TikhonovProblem(op, np.ones(n), noise, m0), m0


def test_noiseless_data_hits_alpha_floor():
    problem, m0 = _level_problem(0.0, n=24)
    settings = SolverSettings(alpha_floor=1e-3, max_gn_iters=10)
    with pytest.warns(ConvergenceWarning):
        _, _, trace = discrepancy_continuation(problem, m0, settings)
    assert trace.status == "alpha_floor"
    assert not trace.converged


def test_continuation_residuals_nonincreasing():
    problem, m0 = _level_problem(1e-3)
    settings = SolverSettings(gn_tolerance=1e-8)
    m, alpha, trace = discrepancy_continuation(problem, m0, settings)
    assert trace.converged
    res = [a.residual for a in trace.alphas]
    assert len(res) > 2
    assert all(b <= a + 1e-12 for a, b in zip(res, res[1:]))
    assert problem.data_norm(problem.residual(m)) < 1.1e-3
    lines = [json.loads(line) for line in trace.to_jsonl().splitlines()]
    assert {d["kind"] for d in lines} == {"iteration", "alpha", "status"}
    assert lines[-1] == {"kind": "status", "status": "discrepancy"}


def test_gauge_shift_gives_identical_iterates():
    problem, m0 = _level_problem(1e-3, n=30)
    shifted0 = m0.replace(theta=m0.theta + 2 * np.pi)
    shifted = TikhonovProblem(problem.forward, problem.data, problem.noise_level, shifted0)
    settings = SolverSettings(max_gn_iters=4)
    alpha = default_alpha(problem, m0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        a, ra = minimize_at_alpha(problem, m0, alpha, settings)
        b, rb = minimize_at_alpha(shifted, shifted0, alpha, settings)
    assert ra.iterations == rb.iterations
    np.testing.assert_allclose(reconstruct_polygon(a), reconstruct_polygon(b), atol=1e-10)
    shift = (b.theta - a.theta) / (2 * np.pi)
    np.testing.assert_allclose(shift, np.round(shift[0]), atol=1e-9)


def test_add_noise_contract():
    cfg = ScatterConfig.equidistant(2.0, 3, 5, nystrom_points=32)
    y = far_field_map(shape_library("circle", 20), cfg)
    same, delta = add_noise(y, 0.0, 7)
    assert delta == 0.0 and np.array_equal(same.values, y.values)
    noisy, delta = add_noise(y, 0.05, 7)
    diff = noisy.like(noisy.vec() - y.vec())
    assert abs(diff.norm() / y.norm() - 0.05) <= 1e-14
    assert delta == pytest.approx(0.05 * y.norm(), rel=1e-15)
    again, _ = add_noise(y, 0.05, 7)
    assert np.array_equal(again.values, noisy.values)
    with pytest.raises(ValueError):
        add_noise(y, -0.1, 0)


def test_default_alpha_finite_at_rest_shape(small_disc_problem):
    problem, m0 = small_disc_problem
    alpha = default_alpha(problem, m0)
    assert np.isfinite(alpha) and alpha > 0


def test_settings_validation():
    with pytest.raises(ConfigError):
        SolverSettings(alpha_factor=1.5)
    with pytest.raises(ConfigError):
        SolverSettings(discrepancy_factor=1.0)
    with pytest.raises(ConfigError):
        SolverSettings(hessian_mode="newton")
    with pytest.raises(ConfigError):
        TikhonovProblem(LinearOperator(np.eye(3)), np.zeros(3), -1.0, regular_polygon(3))
