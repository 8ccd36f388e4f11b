import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import central_difference, random_feasible, random_partition
from elastica_scatter.energy import bending_energy, intrinsic_hessian, mobius_energy
from elastica_scatter.geometry import (
    ShapePoint,
    closure_jacobian,
    reconstruct_polygon,
    regular_polygon,
    restore_feasibility,
)


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_regular_polygon_bending_energy(n):
    assert abs(bending_energy(regular_polygon(n)).value - 4 * np.pi**2) <= 1e-12 * 4 * np.pi**2


def test_rest_shape_has_zero_energy():
    m = random_feasible(20, np.random.default_rng(0))
    report = bending_energy(m, m)
    assert report.value == 0.0
    assert not np.any(report.gradient)


def test_partition_mismatch_rejected():
    with pytest.raises(ValueError):
        other = random_partition(10, np.random.default_rng(2))
        bending_energy(regular_polygon(10), random_feasible(10, np.random.default_rng(1), partition=other))


def _energy_of(m, rest):
    return lambda x: bending_energy(ShapePoint.from_vector(x, m.partition), rest).value


@settings(max_examples=20, deadline=None)
@given(st.integers(5, 40), st.integers(0, 2**31))
def test_bending_gradient_and_hessian_fd(n, seed):
    rng = np.random.default_rng(seed)
    part = random_partition(n, rng)
    m = random_feasible(n, rng, amplitude=0.3, partition=part)
    rest = random_feasible(n, rng, amplitude=0.3, partition=part)
    report = bending_energy(m, rest)
    fd = central_difference(_energy_of(m, rest), m.to_vector())
    assert np.linalg.norm(fd - report.gradient) <= 1e-7 * np.linalg.norm(report.gradient)
    np.testing.assert_array_equal(report.gradient[n:], 0.0)
    fd_hess = central_difference(
        lambda th: bending_energy(m.replace(theta=th), rest).gradient[:n], m.theta, eps=1e-5
    )
    assert np.linalg.norm(fd_hess - report.hessian) <= 1e-5 * np.linalg.norm(report.hessian)


@settings(max_examples=20, deadline=None)
@given(st.integers(5, 40), st.integers(0, 2**31))
def test_bending_invariants(n, seed):
    rng = np.random.default_rng(seed)
    m = random_feasible(n, rng, amplitude=0.3)
    rest = random_feasible(n, rng, amplitude=0.3)
    e = bending_energy(m, rest)
    shifted = m.replace(theta=m.theta + 2 * np.pi, length=3.0, base=[5.0, -1.0])
    assert bending_energy(shifted, rest).value == pytest.approx(e.value, rel=1e-12, abs=1e-14)
    assert bending_energy(rest, m).value == pytest.approx(e.value, rel=1e-12, abs=1e-14)
    np.testing.assert_allclose(e.hessian, e.hessian.T)
    np.testing.assert_allclose(e.hessian @ np.ones(n), 0.0, atol=1e-9 * np.abs(e.hessian).max())
    assert np.linalg.eigvalsh(e.hessian).min() > -1e-9 * np.abs(e.hessian).max()


def test_energy_report_json():
    doc = json.loads(bending_energy(regular_polygon(6)).to_json())
    assert doc["value"] == pytest.approx(4 * np.pi**2)
    assert len(doc["gradient"]) == 9


def test_intrinsic_hessian_zero_gradient_is_raw():
    m = random_feasible(12, np.random.default_rng(3))
    report = bending_energy(m, m)
    np.testing.assert_allclose(intrinsic_hessian(m, report.gradient, report.hessian), report.hessian)


def test_intrinsic_hessian_symmetric():
    rng = np.random.default_rng(4)
    m = random_feasible(30, rng, amplitude=0.2)
    report = bending_energy(m, random_feasible(30, rng, amplitude=0.2))
    h = intrinsic_hessian(m, report.gradient, report.hessian)
    assert np.linalg.norm(h - h.T) <= 1e-10


def test_intrinsic_hessian_matches_restored_second_differences():
    # second derivative of E along t -> restore(m + t u) for tangent u is u^T Hess u
    rng = np.random.default_rng(5)
    n = 10
    m = random_feasible(n, rng, amplitude=0.3)
    rest = random_feasible(n, rng, amplitude=0.3)
    report = bending_energy(m, rest)
    hess = intrinsic_hessian(m, report.gradient, report.hessian)
    null = np.linalg.svd(closure_jacobian(m))[2][2:].T
    t = 1e-3

    def energy(x):
        return bending_energy(restore_feasibility(x, tol=1e-15), rest).value

    for _ in range(5):
        u = null @ rng.normal(size=n - 2)
        u /= np.linalg.norm(u)
        second = (
            energy(m.replace(theta=m.theta + t * u))
            + energy(m.replace(theta=m.theta - t * u))
            - 2 * report.value
        ) / t**2
        exact = u @ hess @ u
        assert abs(second - exact) <= 1e-4 * abs(exact)


def test_mobius_circle_oracle():
    # unit circle: |x - y| = 2 sin(s/2), arc distance s; energy = 4 pi int_0^pi (...) ds
    integrand = lambda s: 1 / (4 * np.sin(s / 2) ** 2) - 1 / s**2
    oracle = 2 * np.pi * 2 * quad(integrand, 0, np.pi, epsabs=1e-13)[0]
    assert oracle == pytest.approx(4.0, abs=1e-10)
    value = mobius_energy(reconstruct_polygon(regular_polygon(200)))
    assert abs(value - oracle) <= 0.02 * oracle


def test_mobius_refinement_approaches_four():
    values = [mobius_energy(reconstruct_polygon(regular_polygon(n))) for n in (50, 100, 200, 400)]
    gaps = [abs(v - 4) for v in values]
    for coarse, fine in zip(gaps, gaps[1:]):
        assert fine <= coarse + 1e-3


def test_mobius_invariances():
    rng = np.random.default_rng(6)
    poly = reconstruct_polygon(random_feasible(40, rng, amplitude=0.2))[:-1]
    e = mobius_energy(poly)
    assert mobius_energy(2.0**3 * poly) == pytest.approx(e, rel=1e-14)
    assert mobius_energy(poly + [3.0, -2.0]) == pytest.approx(e, rel=1e-12)
    c, s = np.cos(0.7), np.sin(0.7)
    assert mobius_energy(poly @ np.array([[c, s], [-s, c]])) == pytest.approx(e, rel=1e-12)


def test_mobius_near_contact_barrier():
    # pinched bow tie: two waist vertices 1e-8 diameters apart
    diam = 2 * np.sqrt(2)
    gap = 1e-8 * diam
    pts = np.array(
        [[-1, -1], [0, -gap / 2], [1, -1], [1, 1], [0, gap / 2], [-1, 1]], dtype=float
    )
    assert mobius_energy(pts) > 1e10
    pts[1, 1] = pts[4, 1] = 0.0
    assert mobius_energy(pts) == float("inf")


def test_mobius_rejects_repeated_vertices():
    with pytest.raises(ValueError):
        mobius_energy(np.array([[0, 0], [0, 0], [1, 0], [0, 1]], dtype=float))
