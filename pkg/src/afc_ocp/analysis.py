"""Error norms, projections, and convergence-rate bookkeeping."""

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .assembly import assemble_stiffness, triangle_geometry
from .errors import InvalidArgumentError
from .linalg import solve
from .quadrature import barycentric, map_to_physical, triangle_rule


def _quad_setup(mesh, quad_degree):
    points, weights = triangle_rule(quad_degree)
    lam = barycentric(points)
    areas, grads = triangle_geometry(mesh)
    x, y = map_to_physical(mesh.nodes[mesh.triangles], points)
    return points, weights, lam, areas, grads, x, y


def l2_error(fh, exact, t, mesh, quad_degree=4):
    """L2 norm of the difference between nodal coefficients and a callable."""
    fh = np.asarray(fh, dtype=float)
    if fh.shape != (mesh.n_nodes,):
        raise InvalidArgumentError("nodal field has the wrong length")
    _, weights, lam, areas, _, x, y = _quad_setup(mesh, quad_degree)
    fh_q = fh[mesh.triangles] @ lam.T
    ex_q = np.broadcast_to(np.asarray(exact(x, y, t), dtype=float), x.shape)
    sq = ((fh_q - ex_q) ** 2 * weights).sum(axis=1) @ areas
    return float(np.sqrt(sq))


def h1_error(fh, exact, exact_grad, t, mesh, quad_degree=4):
    """Full H1 norm of the error; the gradient of fh is constant per triangle."""
    fh = np.asarray(fh, dtype=float)
    if fh.shape != (mesh.n_nodes,):
        raise InvalidArgumentError("nodal field has the wrong length")
    _, weights, lam, areas, grads, x, y = _quad_setup(mesh, quad_degree)
    fh_q = fh[mesh.triangles] @ lam.T
    ex_q = np.broadcast_to(np.asarray(exact(x, y, t), dtype=float), x.shape)
    l2_sq = ((fh_q - ex_q) ** 2 * weights).sum(axis=1) @ areas

    nodal = fh[mesh.triangles]
    gh_x = (nodal * grads[:, :, 0]).sum(axis=1)
    gh_y = (nodal * grads[:, :, 1]).sum(axis=1)
    gx, gy = exact_grad(x, y, t)
    gx = np.broadcast_to(np.asarray(gx, dtype=float), x.shape)
    gy = np.broadcast_to(np.asarray(gy, dtype=float), x.shape)
    diff = (gh_x[:, None] - gx) ** 2 + (gh_y[:, None] - gy) ** 2
    semi_sq = (diff * weights).sum(axis=1) @ areas
    return float(np.sqrt(l2_sq + semi_sq))


def ritz_projection(v_grad, mesh, t=0.0, quad_degree=4):
    """Stiffness-orthogonal projection onto the P1 space with zero trace.

    ``v_grad(x, y, t)`` supplies the exact gradient, so the load
    (grad v, grad phi_i) is integrated without differencing; the projected
    coefficients solve the interior stiffness system and vanish on the
    boundary.
    """
    stiffness = assemble_stiffness(mesh)
    points, weights = triangle_rule(quad_degree)
    areas, grads = triangle_geometry(mesh)
    x, y = map_to_physical(mesh.nodes[mesh.triangles], points)
    gx, gy = v_grad(x, y, t)
    gx = np.broadcast_to(np.asarray(gx, dtype=float), x.shape)
    gy = np.broadcast_to(np.asarray(gy, dtype=float), x.shape)
    mean_gx = gx @ weights
    mean_gy = gy @ weights
    contrib = areas[:, None] * (
        mean_gx[:, None] * grads[:, :, 0] + mean_gy[:, None] * grads[:, :, 1]
    )
    rhs = np.bincount(
        mesh.triangles.ravel(), weights=contrib.ravel(), minlength=mesh.n_nodes
    )
    interior = mesh.interior_nodes
    out = np.zeros(mesh.n_nodes)
    out[interior] = solve(
        stiffness[np.ix_(interior, interior)].tocsr(), rhs[interior]
    )
    return out


def eoc(errors):
    """Experimental orders of convergence for errors on a 2-refined family."""
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 1 or len(errors) < 2:
        raise InvalidArgumentError("need at least two errors to form orders")
    if np.any(errors <= 0.0):
        raise InvalidArgumentError("errors must be positive to take orders")
    return list(np.log2(errors[:-1] / errors[1:]))


def oscillation_indicator(field, exact_min, exact_max):
    """Undershoot and overshoot of a nodal field against exact bounds."""
    field = np.asarray(field, dtype=float)
    undershoot = max(0.0, exact_min - float(field.min()))
    overshoot = max(0.0, float(field.max()) - exact_max)
    return undershoot, overshoot


@dataclass
class ErrorRecord:
    """One refinement level's errors; orders attach against the previous level."""

    h0: float
    k: float
    err_l2: float
    err_h1: Optional[float] = None
    order_l2: Optional[float] = None
    order_h1: Optional[float] = None


def attach_orders(records):
    """Fill in the order columns of a refinement sequence, in place."""
    for prev, cur in zip(records, records[1:]):
        cur.order_l2 = float(np.log2(prev.err_l2 / cur.err_l2))
        if prev.err_h1 is not None and cur.err_h1 is not None:
            cur.order_h1 = float(np.log2(prev.err_h1 / cur.err_h1))
    return records


def write_error_csv(records, path, include_h1=True):
    """Write a refinement table with columns h0, err_L2, order_L2[, err_H1, order_H1]."""
    headers = ["h0", "err_L2", "order_L2"]
    if include_h1:
        headers += ["err_H1", "order_H1"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        for rec in records:
            row = [
                f"{rec.h0:.10g}",
                f"{rec.err_l2:.6e}",
                "" if rec.order_l2 is None else f"{rec.order_l2:.4f}",
            ]
            if include_h1:
                row += [
                    "" if rec.err_h1 is None else f"{rec.err_h1:.6e}",
                    "" if rec.order_h1 is None else f"{rec.order_h1:.4f}",
                ]
            writer.writerow(row)
