"""Edge flux definitions and the symmetric flux limiter.

Fluxes live on the undirected edge list of the mesh; the stored value is the
flux as seen from the lower-numbered endpoint i of edge (i, j), and the flux
seen from j is its negative.  Three raw flux families appear in the scheme:

    diffusive, forward step:   f_ij  = d_ij (v_j - v_i)
    diffusive, backward step:  f_ij  = dhat_ij (v_i - v_j)
    mass type (either step):   g_ij  = m_ij ((dn_i - dn_j) - (do_i - do_j))

where dn is the current iterate and do the value at the neighbouring time
level.  The limiter computes one factor per edge from nodal bounds: for each
interior node the admissible total antidiffusive input is bracketed by

    Q_i^- = q_i (min over the patch of w - w_i)   and
    Q_i^+ = q_i (max over the patch of w - w_i),

where w is the iterate the bounds are built from and q_i >= 0 a coefficient
reflecting the operator being corrected.  Positive and negative flux sums
P_i^+/- are throttled by R_i^+/- = min(1, Q_i^+/- / P_i^+/-), each edge takes
the factor of its endpoint matching the flux sign, and the two endpoint
votes combine by minimum.  Boundary nodes impose no throttle (their side
votes 1); an edge with both endpoints on the boundary keeps its full flux.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .assembly import matrix_entries
from .errors import InvalidArgumentError

STATE_DIFFUSION = "state_diffusion"
ADJOINT_DIFFUSION = "adjoint_diffusion"
STATE_MASS = "state_mass"
ADJOINT_MASS = "adjoint_mass"

_FLUX_KINDS = (STATE_DIFFUSION, ADJOINT_DIFFUSION, STATE_MASS, ADJOINT_MASS)

Q_KINDS = ("D", "D_hat", "mass")


@dataclass(frozen=True)
class FluxSet:
    """Raw antidiffusive fluxes on the mesh edge list."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in _FLUX_KINDS:
            raise InvalidArgumentError(f"unknown flux kind {self.kind!r}")


@dataclass(frozen=True)
class CorrectionFactors:
    """Per-edge limiter output, each value in [0, 1]."""

    values: np.ndarray
    q: np.ndarray
    kind: str


def _edge_coefficients(operator_or_values, edges):
    if sparse.issparse(operator_or_values):
        return matrix_entries(operator_or_values, edges[:, 0], edges[:, 1])
    vals = np.asarray(operator_or_values, dtype=float)
    if vals.shape != (len(edges),):
        raise InvalidArgumentError(
            f"expected one coefficient per edge, got shape {vals.shape}"
        )
    return vals


def fluxes_state_diffusion(d_operator, field, edges):
    """f_ij = d_ij (v_j - v_i) for the forward step.

    ``d_operator`` may be the sparse operator or its precomputed edge values.
    """
    d = _edge_coefficients(d_operator, edges)
    i, j = edges[:, 0], edges[:, 1]
    return FluxSet(values=d * (field[j] - field[i]), kind=STATE_DIFFUSION)


def fluxes_adjoint_diffusion(dhat_operator, field, edges):
    """f_ij = dhat_ij (v_i - v_j) for the backward-in-time step."""
    dhat = _edge_coefficients(dhat_operator, edges)
    i, j = edges[:, 0], edges[:, 1]
    return FluxSet(values=dhat * (field[i] - field[j]), kind=ADJOINT_DIFFUSION)


def fluxes_mass(m_operator, current, previous, edges, kind=STATE_MASS):
    """g_ij = m_ij ((dn_i - dn_j) - (do_i - do_j)).

    ``current`` is the iterate at the level being solved, ``previous`` the
    known neighbouring level (earlier in time for the forward step, later
    for the backward one).
    """
    if kind not in (STATE_MASS, ADJOINT_MASS):
        raise InvalidArgumentError(f"mass fluxes cannot have kind {kind!r}")
    m = _edge_coefficients(m_operator, edges)
    i, j = edges[:, 0], edges[:, 1]
    dn = current[i] - current[j]
    do = previous[i] - previous[j]
    return FluxSet(values=m * (dn - do), kind=kind)


def q_coefficients(mesh, kind, ops):
    """Nodal throttle coefficients q_i for one operator family.

    ``kind`` selects which operator's row magnitudes enter: "D" for the
    forward diffusive family, "D_hat" for the backward one, "mass" for both
    mass families.  Interior nodes get gamma_i times the absolute row sum
    off the diagonal; boundary nodes get 0 since no bound is enforced there.
    """
    if kind not in Q_KINDS:
        raise InvalidArgumentError(f"unknown q coefficient kind {kind!r}")
    vals = {"D": ops.d_edge, "D_hat": ops.dhat_edge, "mass": ops.m_edge}[kind]
    mag = np.abs(vals)
    n = mesh.n_nodes
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    q = np.bincount(i, weights=mag, minlength=n) + np.bincount(
        j, weights=mag, minlength=n
    )
    q *= mesh.gamma
    q[mesh.boundary_mask] = 0.0
    return q


def kuzmin_factors(mesh, fluxes, extremum_data, q):
    """Correction factors for one flux family.

    Parameters
    ----------
    fluxes : FluxSet
        Raw fluxes on ``mesh.edges``.
    extremum_data : ndarray
        Nodal field whose patch extrema define the admissible increments
        Q_i^+/-.  For the diffusive families this is the current iterate
        itself; for the mass families it is the current iterate as well,
        even though the fluxes involve a difference of levels.
    q : ndarray
        Nodal throttle coefficients; must be nonnegative at interior nodes.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (mesh.n_nodes,):
        raise InvalidArgumentError("q must have one entry per node")
    if np.any(q[~mesh.boundary_mask] < 0.0):
        raise InvalidArgumentError("q must be nonnegative at interior nodes")
    p = np.asarray(fluxes.values, dtype=float)
    if p.shape != (mesh.n_edges,):
        raise InvalidArgumentError("fluxes must have one value per edge")
    field = np.asarray(extremum_data, dtype=float)
    if field.shape != (mesh.n_nodes,):
        raise InvalidArgumentError("extremum data must have one entry per node")

    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    n = mesh.n_nodes
    pos = np.maximum(p, 0.0)
    neg = np.minimum(p, 0.0)
    # The flux seen from j is -p, so j's positive sum collects -neg.
    p_plus = np.bincount(i, weights=pos, minlength=n) - np.bincount(
        j, weights=neg, minlength=n
    )
    p_minus = np.bincount(i, weights=neg, minlength=n) - np.bincount(
        j, weights=pos, minlength=n
    )

    lo, hi = mesh.patch_extrema(field)
    q_plus = q * (hi - field)
    q_minus = q * (lo - field)

    r_plus = np.ones(n)
    r_minus = np.ones(n)
    active = ~mesh.boundary_mask
    grow = active & (p_plus > 0.0)
    r_plus[grow] = np.minimum(1.0, q_plus[grow] / p_plus[grow])
    shrink = active & (p_minus < 0.0)
    r_minus[shrink] = np.minimum(1.0, q_minus[shrink] / p_minus[shrink])

    vote_i = np.where(p > 0.0, r_plus[i], np.where(p < 0.0, r_minus[i], 1.0))
    vote_j = np.where(p > 0.0, r_minus[j], np.where(p < 0.0, r_plus[j], 1.0))
    a = np.minimum(vote_i, vote_j)
    return CorrectionFactors(values=a, q=q, kind=fluxes.kind)


def correction_term(fluxes, factors, edges, n_nodes):
    """Nodal correction sum_j a_ij f_ij given per-edge fluxes and factors.

    Each edge contributes its limited flux to node i and the negative to
    node j, matching the antisymmetry of the raw fluxes.
    """
    if factors.kind != fluxes.kind:
        raise InvalidArgumentError(
            f"factor kind {factors.kind!r} does not match flux kind {fluxes.kind!r}"
        )
    limited = factors.values * fluxes.values
    return np.bincount(
        edges[:, 0], weights=limited, minlength=n_nodes
    ) - np.bincount(edges[:, 1], weights=limited, minlength=n_nodes)


def write_factor_csv(path, edges, fluxes, factors):
    """Dump one flux family as CSV rows i, j, flux, a_ij."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "flux", "a_ij"])
        for (i, j), f, a in zip(edges, fluxes.values, factors.values):
            writer.writerow([int(i), int(j), f"{f:.16e}", f"{a:.16e}"])
