"""P1 finite element assembly on triangle meshes.

Conventions: the consistent mass matrix has entries (phi_j, phi_i), the
stiffness matrix (grad phi_j, grad phi_i) without any diffusion coefficient,
and the convection matrix tau_ij = (b . grad phi_j, phi_i).  The two
artificial diffusion operators derive entrywise from the convection matrix,

    d_ij    = min(-tau_ij, 0, -tau_ji)   (off-diagonal, <= 0),
    dhat_ij = max(-tau_ij, 0, -tau_ji)   (off-diagonal, >= 0),

with diagonals chosen so every row sums to zero; both are symmetric.  All
operators are assembled over the full node set.  Restriction to interior
unknowns happens where time-step systems are composed.

Mass and stiffness use exact closed-form element integrals.  Convection is
integrated with the edge-midpoint rule by default, which is exact whenever
the velocity is affine on each triangle.
"""

import time
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import InvalidArgumentError
from .quadrature import barycentric, map_to_physical, triangle_rule

_ELEMENT_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def triangle_geometry(mesh):
    """Areas and the constant P1 basis gradients of every triangle.

    Returns (areas, grads) with shapes (n_tri,) and (n_tri, 3, 2).
    """
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    two_a = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (
        y[:, 1] - y[:, 0]
    )
    grads = np.empty((len(two_a), 3, 2))
    for loc in range(3):
        nxt, prv = (loc + 1) % 3, (loc + 2) % 3
        grads[:, loc, 0] = (y[:, nxt] - y[:, prv]) / two_a
        grads[:, loc, 1] = (x[:, prv] - x[:, nxt]) / two_a
    return 0.5 * two_a, grads


def _scatter_elements(mesh, element_blocks):
    """Accumulate per-element 3x3 blocks into a CSR operator over all nodes."""
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    a = sparse.coo_matrix(
        (element_blocks.ravel(), (rows, cols)),
        shape=(mesh.n_nodes, mesh.n_nodes),
    ).tocsr()
    a.sort_indices()
    return a


def assemble_mass(mesh):
    """Consistent mass matrix, exact element integrals."""
    areas, _ = triangle_geometry(mesh)
    return _scatter_elements(mesh, areas[:, None, None] * _ELEMENT_MASS)


def lump_mass(mass):
    """Row-sum lumping of a mass matrix, returned as a diagonal CSR operator."""
    d = np.asarray(mass.sum(axis=1)).ravel()
    return sparse.diags(d, 0, format="csr")


def assemble_stiffness(mesh):
    """Stiffness matrix (grad phi_j, grad phi_i), no coefficient, exact."""
    areas, grads = triangle_geometry(mesh)
    ke = np.einsum("tid,tjd->tij", grads, grads) * areas[:, None, None]
    return _scatter_elements(mesh, ke)


def assemble_convection(mesh, velocity, t=0.0, quad_degree=2):
    """Convection matrix tau_ij = (b . grad phi_j, phi_i) at time t.

    Parameters
    ----------
    velocity : callable
        ``velocity(x, y, t) -> (bx, by)`` where the components broadcast
        against the quadrature point arrays.
    quad_degree : int
        Polynomial degree the rule integrates exactly.  The default 2 is
        exact for velocities that are affine on each triangle.
    """
    areas, grads = triangle_geometry(mesh)
    points, weights = triangle_rule(quad_degree)
    lam = barycentric(points)
    x, y = map_to_physical(mesh.nodes[mesh.triangles], points)
    bx, by = velocity(x, y, t)
    bx = np.broadcast_to(np.asarray(bx, dtype=float), x.shape)
    by = np.broadcast_to(np.asarray(by, dtype=float), x.shape)
    # b . grad phi_j at each quadrature point: (n_tri, nq, 3)
    bdotg = bx[:, :, None] * grads[:, None, :, 0] + by[:, :, None] * grads[:, None, :, 1]
    ke = np.einsum("q,qi,tqj->tij", weights, lam, bdotg) * areas[:, None, None]
    return _scatter_elements(mesh, ke)


def matrix_entries(a, rows, cols):
    """Entries a[rows[k], cols[k]] as a dense vector; positions outside the
    sparsity pattern read as zero."""
    coo = a.tocoo()
    ncols = a.shape[1]
    keys = coo.row.astype(np.int64) * ncols + coo.col
    order = np.argsort(keys)
    keys = keys[order]
    vals = coo.data[order]
    queries = np.asarray(rows, dtype=np.int64) * ncols + np.asarray(cols, dtype=np.int64)
    pos = np.searchsorted(keys, queries)
    out = np.zeros(len(queries))
    inside = pos < len(keys)
    hit = inside.copy()
    hit[inside] = keys[pos[inside]] == queries[inside]
    out[hit] = vals[pos[hit]]
    return out


def _symmetric_from_edges(mesh, edge_vals):
    """Symmetric zero-row-sum operator with the given off-diagonal edge values."""
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    n = mesh.n_nodes
    diag = -(
        np.bincount(i, weights=edge_vals, minlength=n)
        + np.bincount(j, weights=edge_vals, minlength=n)
    )
    rows = np.concatenate([i, j, np.arange(n)])
    cols = np.concatenate([j, i, np.arange(n)])
    data = np.concatenate([edge_vals, edge_vals, diag])
    a = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    a.sort_indices()
    return a


def artificial_diffusion(convection, mesh):
    """Nonpositive off-diagonal compensation for the convection matrix."""
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    tij = matrix_entries(convection, i, j)
    tji = matrix_entries(convection, j, i)
    d = np.minimum(np.minimum(-tij, 0.0), -tji)
    return _symmetric_from_edges(mesh, d)


def artificial_diffusion_hat(convection, mesh):
    """Nonnegative counterpart used by the backward-in-time step."""
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    tij = matrix_entries(convection, i, j)
    tji = matrix_entries(convection, j, i)
    d = np.maximum(np.maximum(-tij, 0.0), -tji)
    return _symmetric_from_edges(mesh, d)


def load_vector(f, t, mesh, quad_degree=4):
    """Nodal load r_i = integral of f(., t) phi_i over the domain."""
    points, weights = triangle_rule(quad_degree)
    lam = barycentric(points)
    areas, _ = triangle_geometry(mesh)
    x, y = map_to_physical(mesh.nodes[mesh.triangles], points)
    fv = np.broadcast_to(np.asarray(f(x, y, t), dtype=float), x.shape)
    contrib = areas[:, None] * ((fv * weights) @ lam)
    return np.bincount(
        mesh.triangles.ravel(), weights=contrib.ravel(), minlength=mesh.n_nodes
    )


def lumped_inner_product(ml_diag, u, v):
    """Discrete inner product sum_i (M_L)_ii u_i v_i."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    ml_diag = np.asarray(ml_diag, dtype=float)
    if not (u.shape == v.shape == ml_diag.shape):
        raise InvalidArgumentError("mismatched vector lengths")
    return float(np.dot(ml_diag * u, v))


@dataclass(frozen=True)
class FemOperators:
    """All time-level operators plus per-edge views used by the limiter.

    ``S`` carries no diffusion coefficient; time-step systems scale it by
    ``mu`` when they compose the left-hand sides.  ``m_edge``, ``d_edge``
    and ``dhat_edge`` hold the entries of M, D and D-hat along
    ``mesh.edges`` so flux assembly never touches sparse storage in the
    inner loops.
    """

    mesh: object
    M: sparse.csr_matrix
    M_L: sparse.csr_matrix
    S: sparse.csr_matrix
    T: sparse.csr_matrix
    D: sparse.csr_matrix
    D_hat: sparse.csr_matrix
    mu: float
    assembly_time: float
    ml: np.ndarray
    m_edge: np.ndarray
    d_edge: np.ndarray
    dhat_edge: np.ndarray


def build_operators(mesh, velocity, mu, t=0.0, convection_degree=2):
    """Assemble every operator the scheme needs at one time level."""
    if mu <= 0.0:
        raise InvalidArgumentError(f"diffusion coefficient must be positive, got {mu}")
    start = time.perf_counter()
    mass = assemble_mass(mesh)
    lumped = lump_mass(mass)
    stiffness = assemble_stiffness(mesh)
    convection = assemble_convection(mesh, velocity, t=t)
    dmat = artificial_diffusion(convection, mesh)
    dhat = artificial_diffusion_hat(convection, mesh)
    elapsed = time.perf_counter() - start
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    return FemOperators(
        mesh=mesh,
        M=mass,
        M_L=lumped,
        S=stiffness,
        T=convection,
        D=dmat,
        D_hat=dhat,
        mu=float(mu),
        assembly_time=elapsed,
        ml=lumped.diagonal().copy(),
        m_edge=matrix_entries(mass, i, j),
        d_edge=matrix_entries(dmat, i, j),
        dhat_edge=matrix_entries(dhat, i, j),
    )
