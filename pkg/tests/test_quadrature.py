"""Quadrature rules against exact monomial integrals."""

import numpy as np
import pytest

from afc_ocp.errors import InvalidArgumentError
from afc_ocp.quadrature import barycentric, map_to_physical, triangle_rule

from oracles import reference_monomial_integral


@pytest.mark.parametrize("degree", range(13))
def test_rule_integrates_monomials_exactly(degree):
    points, weights = triangle_rule(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            approx = 0.5 * np.sum(weights * points[:, 0] ** a * points[:, 1] ** b)
            exact = reference_monomial_integral(a, b)
            assert approx == pytest.approx(exact, rel=1e-13, abs=1e-16)


@pytest.mark.parametrize("degree", [0, 1, 2, 3, 4, 5, 7, 10])
def test_weights_sum_to_one_and_points_inside(degree):
    points, weights = triangle_rule(degree)
    assert np.sum(weights) == pytest.approx(1.0, rel=1e-14)
    assert np.all(points >= -1e-14)
    assert np.all(points.sum(axis=1) <= 1.0 + 1e-14)


def test_negative_degree_rejected():
    with pytest.raises(InvalidArgumentError):
        triangle_rule(-1)


def test_map_to_physical_matches_affine_map():
    rng = np.random.default_rng(7)
    tri = rng.uniform(-1.0, 2.0, size=(5, 3, 2))
    points, _ = triangle_rule(4)
    x, y = map_to_physical(tri, points)
    for t in range(5):
        for q, (xi, eta) in enumerate(points):
            expect = (
                tri[t, 0] + xi * (tri[t, 1] - tri[t, 0]) + eta * (tri[t, 2] - tri[t, 0])
            )
            assert x[t, q] == pytest.approx(expect[0], abs=1e-14)
            assert y[t, q] == pytest.approx(expect[1], abs=1e-14)


def test_barycentric_partition_of_unity():
    points, _ = triangle_rule(7)
    lam = barycentric(points)
    assert np.allclose(lam.sum(axis=1), 1.0, atol=1e-14)
    assert np.all(lam >= -1e-14)
    # Vertex values: the first barycentric coordinate is 1 at the origin.
    corner = barycentric(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    assert np.allclose(corner, np.eye(3), atol=1e-15)
