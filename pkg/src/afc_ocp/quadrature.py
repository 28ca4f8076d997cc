"""Quadrature rules on triangles.

Rules are stated on the reference triangle with vertices (0,0), (1,0), (0,1)
and weights normalized to sum to 1, so the integral of f over a physical
triangle K is approximated by |K| * sum_q w_q f(x_q).
"""

import numpy as np

from .errors import InvalidArgumentError

__all__ = ["triangle_rule", "map_to_physical", "barycentric"]

# Two symmetric orbits (a, a, 1-2a) of the classical 6-point rule, exact
# through total degree 4.
_DEG4_A1, _DEG4_W1 = 0.445948490915965, 0.223381589678011
_DEG4_A2, _DEG4_W2 = 0.091576213509771, 0.109951743655322


def _orbit(a):
    b = 1.0 - 2.0 * a
    return [(a, a), (b, a), (a, b)]


def _gauss_collapsed(n):
    # Duffy map (u, v) -> (u, v*(1-u)) takes the unit square to the triangle;
    # the Jacobian (1-u) is folded into the weights.  A tensor rule with n
    # points per direction handles total degree d once 2n-1 >= d+1, since the
    # Jacobian raises the u-degree by one.
    x, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    uu, vv = np.meshgrid(u, u, indexing="ij")
    points = np.column_stack([uu.ravel(), (vv * (1.0 - uu)).ravel()])
    weights = 2.0 * np.outer(wu * (1.0 - u), wu).ravel()
    return points, weights


def triangle_rule(degree):
    """Return (points, weights) exact for polynomials of total degree ``degree``.

    ``points`` has shape (nq, 2) in reference coordinates and ``weights``
    has shape (nq,) with sum 1.
    """
    if degree < 0:
        raise InvalidArgumentError("quadrature degree must be nonnegative")
    if degree <= 1:
        return np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([1.0])
    if degree == 2:
        points = np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
        return points, np.full(3, 1.0 / 3.0)
    if degree <= 4:
        points = np.array(_orbit(_DEG4_A1) + _orbit(_DEG4_A2))
        weights = np.array([_DEG4_W1] * 3 + [_DEG4_W2] * 3)
        return points, weights
    n = (degree + 3) // 2
    return _gauss_collapsed(n)


def map_to_physical(tri_coords, points):
    """Push reference points into every triangle at once.

    tri_coords has shape (n_tri, 3, 2); returns arrays x, y of shape
    (n_tri, nq).
    """
    v0 = tri_coords[:, 0, :]
    e1 = tri_coords[:, 1, :] - v0
    e2 = tri_coords[:, 2, :] - v0
    xi, eta = points[:, 0], points[:, 1]
    x = v0[:, 0:1] + np.outer(e1[:, 0], xi) + np.outer(e2[:, 0], eta)
    y = v0[:, 1:2] + np.outer(e1[:, 1], xi) + np.outer(e2[:, 1], eta)
    return x, y


def barycentric(points):
    """P1 basis values at reference points, shape (nq, 3)."""
    xi, eta = points[:, 0], points[:, 1]
    return np.column_stack([1.0 - xi - eta, xi, eta])
