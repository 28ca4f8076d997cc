"""Single time steps of the flux-corrected scheme.

Forward step (implicit Euler in time): given the previous coefficients
``alpha_prev``, solve

    (M_L + k (mu S + T + D)) alpha = M_L alpha_prev + cr + sr
                                     + k corr_d(alpha) + corr_m(alpha)

where cr = k M u_nodal carries the control, sr = k r(G(., t_n)) the source,
corr_d the limited diffusive correction, and corr_m the limited mass
correction built from alpha - alpha_prev.  The corrections depend on alpha
through the limiter, so the step is solved by a Picard iteration that
freezes the correction input at the previous iterate; the system matrix
never changes, so one factorization serves every iterate (and every time
level when the velocity is steady).

Backward-in-time step: given ``beta_next`` at level n and the state at the
same level, solve

    (M_L + k (mu S - T - D_hat)) beta = M_L beta_next + k M_L alpha_n - dr
                                        + k corr_dhat(beta) + corr_m(beta)

with dr the scaled desired-state load (the caller samples y_d at the foot
of the step, where the step is implicit) and the mass correction built from
beta - beta_next.  Pinning every correction factor to 1 reproduces the
plain consistent-mass Galerkin scheme; ``scheme="galerkin"`` does exactly
that, sharing all code with the limited path except the factor values.
"""

from dataclasses import dataclass

import numpy as np

from . import limiter
from .errors import InvalidArgumentError, StepFailure
from .linalg import axpy_combine, factorize
from .problems import box_clamp

INCREMENT_FLOOR = 1e-14

# "afc" limits the corrections, "galerkin" pins every factor to 1 (recovering
# the consistent-mass scheme without stabilization), "low_order" pins them to
# 0 (pure lumped-mass upwind transport).
SCHEMES = ("afc", "galerkin", "low_order")


@dataclass(frozen=True)
class StepConfig:
    """Knobs of a single time step.

    k is the time step size; inner_tol and max_inner control the Picard
    iteration; linear_tol is the relative residual requested from the
    sparse solver; scheme picks the correction factors: limited ("afc"),
    pinned to one ("galerkin"), or pinned to zero ("low_order").

    relaxation blends each Picard update with the previous iterate
    (new = (1-w) old + w step), which does not move the fixed point but
    breaks the factor flip-flop cycles the plain iteration can fall into
    on strongly convection-dominated problems; 1.0 is the plain iteration.
    """

    k: float
    inner_tol: float = 1e-10
    max_inner: int = 50
    linear_tol: float = 1e-10
    scheme: str = "afc"
    relaxation: float = 1.0

    def __post_init__(self):
        if self.k <= 0.0:
            raise InvalidArgumentError(f"time step must be positive, got {self.k}")
        if self.inner_tol <= 0.0 or self.linear_tol <= 0.0:
            raise InvalidArgumentError("tolerances must be positive")
        if self.max_inner < 1:
            raise InvalidArgumentError("need at least one Picard iteration")
        if not 0.0 < self.relaxation <= 1.0:
            raise InvalidArgumentError(
                f"relaxation must lie in (0, 1], got {self.relaxation}"
            )
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(
                f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}"
            )


@dataclass(frozen=True)
class PicardReport:
    """Outcome of one step's Picard iteration."""

    iterations: int
    increment: float
    residual: float


class StepSystems:
    """Factorized interior systems plus per-level limiter inputs.

    Everything here is invariant across Picard iterations, and across time
    levels as long as the operators are; build once and pass to every step
    that shares the operators.  Factorizations are formed on first use so a
    forward-only or backward-only sweep pays for one side.
    """

    def __init__(self, ops, cfg):
        self.ops = ops
        self.k = cfg.k
        mesh = ops.mesh
        self.interior = mesh.interior_nodes
        k, mu = cfg.k, ops.mu
        self._state_matrix = axpy_combine(
            [(1.0, ops.M_L), (k * mu, ops.S), (k, ops.T), (k, ops.D)]
        )[np.ix_(self.interior, self.interior)].tocsr()
        self._adjoint_matrix = axpy_combine(
            [(1.0, ops.M_L), (k * mu, ops.S), (-k, ops.T), (-k, ops.D_hat)]
        )[np.ix_(self.interior, self.interior)].tocsr()
        self._state_solver = None
        self._adjoint_solver = None
        self.q_d = limiter.q_coefficients(mesh, "D", ops)
        self.q_dhat = limiter.q_coefficients(mesh, "D_hat", ops)
        self.q_mass = limiter.q_coefficients(mesh, "mass", ops)

    @property
    def state_matrix(self):
        return self._state_matrix

    @property
    def adjoint_matrix(self):
        return self._adjoint_matrix

    def solve_state(self, rhs, tol):
        if self._state_solver is None:
            self._state_solver = factorize(self._state_matrix)
        return self._state_solver.solve(rhs, tol)

    def solve_adjoint(self, rhs, tol):
        if self._adjoint_solver is None:
            self._adjoint_solver = factorize(self._adjoint_matrix)
        return self._adjoint_solver.solve(rhs, tol)


def _relative_increment(new, old):
    scale = max(np.abs(new).max(initial=0.0), INCREMENT_FLOOR)
    return np.abs(new - old).max(initial=0.0) / scale


def _pinned_factors(scheme, mesh, fluxes, q):
    value = 1.0 if scheme == "galerkin" else 0.0
    return limiter.CorrectionFactors(
        np.full(mesh.n_edges, value), q, fluxes.kind
    )


def _state_corrections(systems, iterate, alpha_prev, scheme):
    ops, mesh = systems.ops, systems.ops.mesh
    edges = mesh.edges
    n = mesh.n_nodes
    fd = limiter.fluxes_state_diffusion(ops.d_edge, iterate, edges)
    fm = limiter.fluxes_mass(
        ops.m_edge, iterate, alpha_prev, edges, kind=limiter.STATE_MASS
    )
    if scheme == "afc":
        ad = limiter.kuzmin_factors(mesh, fd, iterate, systems.q_d)
        am = limiter.kuzmin_factors(mesh, fm, iterate, systems.q_mass)
    else:
        ad = _pinned_factors(scheme, mesh, fd, systems.q_d)
        am = _pinned_factors(scheme, mesh, fm, systems.q_mass)
    return (
        limiter.correction_term(fd, ad, edges, n),
        limiter.correction_term(fm, am, edges, n),
    )


def _adjoint_corrections(systems, iterate, beta_next, scheme):
    ops, mesh = systems.ops, systems.ops.mesh
    edges = mesh.edges
    n = mesh.n_nodes
    fd = limiter.fluxes_adjoint_diffusion(ops.dhat_edge, iterate, edges)
    fm = limiter.fluxes_mass(
        ops.m_edge, iterate, beta_next, edges, kind=limiter.ADJOINT_MASS
    )
    if scheme == "afc":
        ad = limiter.kuzmin_factors(mesh, fd, iterate, systems.q_dhat)
        am = limiter.kuzmin_factors(mesh, fm, iterate, systems.q_mass)
    else:
        ad = _pinned_factors(scheme, mesh, fd, systems.q_dhat)
        am = _pinned_factors(scheme, mesh, fm, systems.q_mass)
    return (
        limiter.correction_term(fd, ad, edges, n),
        limiter.correction_term(fm, am, edges, n),
    )


def _picard(fixed, start, corrections, matrix, solve, interior, cfg, t, label):
    """Shared fixed-point driver for both step directions."""
    iterate = start
    increment = np.inf
    iterations = 0
    for iterations in range(1, cfg.max_inner + 1):
        corr_d, corr_m = corrections(iterate)
        rhs = fixed + cfg.k * corr_d + corr_m
        new = np.zeros_like(start)
        new[interior] = solve(rhs[interior], cfg.linear_tol)
        if cfg.relaxation != 1.0:
            new = (1.0 - cfg.relaxation) * iterate + cfg.relaxation * new
        increment = _relative_increment(new, iterate)
        iterate = new
        if increment <= cfg.inner_tol:
            break
    # Residual of the nonlinear system with corrections re-evaluated at the
    # accepted iterate; this is the honest measure, the increment is not.
    corr_d, corr_m = corrections(iterate)
    rhs = (fixed + cfg.k * corr_d + corr_m)[interior]
    defect = matrix @ iterate[interior] - rhs
    residual = np.linalg.norm(defect) / max(np.linalg.norm(rhs), INCREMENT_FLOOR)
    report = PicardReport(iterations=iterations, increment=increment, residual=residual)
    if increment > cfg.inner_tol:
        when = "" if t is None else f" at t={t:.6g}"
        raise StepFailure(
            f"{label} step{when} did not converge in {cfg.max_inner} Picard "
            f"iterations (increment {increment:.3e})",
            report=report,
            t=t,
        )
    return iterate, report


def state_step(alpha_prev, control_rhs, source_rhs, ops, cfg, systems=None, t=None):
    """Advance the state one level; returns (alpha, PicardReport).

    ``control_rhs`` and ``source_rhs`` are the already scaled load vectors
    k M u_nodal and k r(G(., t_n)).  ``systems`` allows the caller to share
    factorized matrices across steps; omitted, it is built on the fly.
    """
    if systems is None:
        systems = StepSystems(ops, cfg)
    fixed = ops.ml * alpha_prev + control_rhs + source_rhs
    return _picard(
        fixed,
        alpha_prev,
        lambda it: _state_corrections(systems, it, alpha_prev, cfg.scheme),
        systems.state_matrix,
        systems.solve_state,
        systems.interior,
        cfg,
        t,
        "state",
    )


def adjoint_step(beta_next, alpha_n, ydata_rhs, ops, cfg, systems=None, t=None):
    """March the co-state one level backwards; returns (beta, PicardReport).

    ``alpha_n`` is the state at the level being left, ``ydata_rhs`` the
    scaled desired-state load k r(y_d) sampled at the foot of the step; the
    state enters through the lumped mass so the right-hand side stays local.
    """
    if systems is None:
        systems = StepSystems(ops, cfg)
    fixed = ops.ml * beta_next + cfg.k * ops.ml * alpha_n - ydata_rhs
    return _picard(
        fixed,
        beta_next,
        lambda it: _adjoint_corrections(systems, it, beta_next, cfg.scheme),
        systems.adjoint_matrix,
        systems.solve_adjoint,
        systems.interior,
        cfg,
        t,
        "co-state",
    )


def clamp_control(beta, lam, lower, upper):
    """Control update: project the scaled co-state onto the box."""
    if lam <= 0.0:
        raise InvalidArgumentError(f"control cost weight must be positive, got {lam}")
    if not lower < upper:
        raise InvalidArgumentError(
            f"control bounds must satisfy lower < upper, got ({lower}, {upper})"
        )
    return box_clamp(-np.asarray(beta, dtype=float) / lam, lower, upper)
