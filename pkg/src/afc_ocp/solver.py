"""Fixed-point solution of the discrete control problem.

One outer iteration sweeps the state forward with the current control,
sweeps the co-state backwards, and reads the next control off the clamped
scaled co-state at every level.  Convergence is measured by three numbers
per iteration: the largest relative max-norm change over all time levels of
the state (A), of the co-state (B), and of the control (C); the loop stops
when all three drop below the outer tolerance.  Relative changes use a
floored denominator so identically zero trajectories compare clean.

The loads for the source and the desired state do not change across outer
iterations, so they are assembled once per time level up front.  With a
steady velocity the time-step matrices are factorized exactly once for the
whole solve.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .analysis import l2_error, ritz_projection
from .assembly import build_operators, load_vector
from .errors import FixedPointFailure, InvalidArgumentError
from .stepping import (
    INCREMENT_FLOOR,
    StepConfig,
    StepSystems,
    adjoint_step,
    clamp_control,
    state_step,
)

INITIAL_STATE_MODES = ("ritz", "interpolate")


@dataclass(frozen=True)
class SolverConfig:
    """Outer-loop knobs wrapped around a :class:`StepConfig`."""

    step: StepConfig
    outer_tol: float = 1e-6
    max_outer: int = 100
    initial_state: str = "ritz"
    load_quad_degree: int = 4

    def __post_init__(self):
        if self.outer_tol <= 0.0:
            raise InvalidArgumentError("outer tolerance must be positive")
        if self.max_outer < 1:
            raise InvalidArgumentError("need at least one outer iteration")
        if self.initial_state not in INITIAL_STATE_MODES:
            raise InvalidArgumentError(
                f"unknown initial state mode {self.initial_state!r}; "
                f"expected one of {INITIAL_STATE_MODES}"
            )


@dataclass
class Trajectory:
    """Discrete state, co-state, and control over the whole time grid.

    ``state`` and ``costate`` hold one row per time level 0..N; ``control``
    holds one row per step, row n-1 being the control acting on the step
    from level n-1 to n.  The final co-state row is identically zero and
    the control rows respect the box bounds by construction.
    """

    times: np.ndarray
    state: np.ndarray
    costate: np.ndarray
    control: np.ndarray

    @property
    def n_steps(self):
        return self.control.shape[0]

    def state_at(self, n):
        return self.state[n]

    def costate_at(self, n):
        return self.costate[n]

    def control_at(self, n):
        """Control of step n, n in 1..N."""
        if not 1 <= n <= self.n_steps:
            raise InvalidArgumentError(
                f"step index {n} out of range 1..{self.n_steps}"
            )
        return self.control[n - 1]


@dataclass
class OuterReport:
    """Progress record of the outer fixed-point loop."""

    iterations: int
    converged: bool
    metrics: list
    wall_time: float
    picard: dict = field(default_factory=dict)

    @property
    def final_metrics(self):
        return self.metrics[-1] if self.metrics else None


def _max_relative_change(new, old):
    scale = np.maximum(np.abs(new).max(axis=1), INCREMENT_FLOOR)
    return float((np.abs(new - old).max(axis=1) / scale).max())


class _SystemsCache:
    """Hands out operators and factorized systems per time level, building
    them once when the velocity is steady and memoizing the last level
    otherwise."""

    def __init__(self, mesh, problem, step_cfg):
        self.mesh = mesh
        self.problem = problem
        self.step_cfg = step_cfg
        self.steady = not problem.velocity_time_dependent
        self._cached_t = None
        self._cached = None
        if self.steady:
            ops = build_operators(mesh, problem.velocity, problem.mu, t=0.0)
            self._cached = (ops, StepSystems(ops, step_cfg))

    def at(self, t):
        if self.steady:
            return self._cached
        if self._cached_t != t:
            ops = build_operators(self.mesh, self.problem.velocity, self.problem.mu, t=t)
            self._cached = (ops, StepSystems(ops, self.step_cfg))
            self._cached_t = t
        return self._cached


def initial_state_coefficients(problem, mesh, mode, quad_degree=4):
    """Nodal coefficients for the starting state, by projection or interpolation."""
    if mode not in INITIAL_STATE_MODES:
        raise InvalidArgumentError(
            f"unknown initial state mode {mode!r}; expected one of {INITIAL_STATE_MODES}"
        )
    if mode == "ritz":
        if problem.initial_state_grad is None:
            raise InvalidArgumentError(
                "initial state projection needs the gradient of the initial state"
            )
        return ritz_projection(
            lambda x, y, t: problem.initial_state_grad(x, y), mesh,
            quad_degree=quad_degree,
        )
    vals = problem.initial_state(mesh.nodes[:, 0], mesh.nodes[:, 1])
    coeffs = np.asarray(vals, dtype=float).copy()
    coeffs[mesh.boundary_mask] = 0.0
    return coeffs


def solve_ocp(problem, mesh, cfg, warm_start=None):
    """Run the outer fixed-point loop to the configured tolerance.

    Parameters
    ----------
    warm_start : Trajectory, optional
        Previous solution used to seed the control and the comparison
        baselines; a re-solve from a converged trajectory terminates after
        a single iteration with all metrics at round-off size.

    Returns
    -------
    (Trajectory, OuterReport)

    Raises
    ------
    FixedPointFailure
        If the iteration cap is hit; the error carries the report and the
        last trajectory.
    """
    problem.validate()
    k = cfg.step.k
    horizon = problem.horizon
    n_steps = int(round(horizon / k))
    if n_steps < 1 or abs(n_steps * k - horizon) > 1e-8 * max(horizon, 1.0):
        raise InvalidArgumentError(
            f"time step {k} does not tile the horizon {horizon}"
        )
    times = k * np.arange(n_steps + 1)
    n = mesh.n_nodes
    lam = problem.lam
    lower, upper = problem.bounds

    started = time.perf_counter()
    cache = _SystemsCache(mesh, problem, cfg.step)

    deg = cfg.load_quad_degree
    source_rhs = np.zeros((n_steps + 1, n))
    ydata_rhs = np.zeros((n_steps + 1, n))
    for level in range(1, n_steps + 1):
        source_rhs[level] = k * load_vector(
            problem.source, times[level], mesh, quad_degree=deg
        )
        # The backward step from level n to n-1 is implicit at the foot of
        # the step, so the desired state is sampled there as well; sampling
        # it at the head costs one full order of the co-state in time.
        ydata_rhs[level] = k * load_vector(
            problem.desired_state, times[level - 1], mesh, quad_degree=deg
        )

    y0h = initial_state_coefficients(problem, mesh, cfg.initial_state, deg)

    if warm_start is not None:
        if warm_start.control.shape != (n_steps, n) or warm_start.state.shape != (
            n_steps + 1,
            n,
        ):
            raise InvalidArgumentError("warm start does not match the time grid")
        control = warm_start.control.copy()
        base_state = warm_start.state.copy()
        base_costate = warm_start.costate.copy()
    else:
        # The fixed point iterates over admissible controls, so the zero
        # guess is projected onto the box first; boxes that exclude zero
        # would otherwise drive the first sweep with an infeasible control.
        seed = clamp_control(np.zeros(n), lam, lower, upper)
        control = np.tile(seed, (n_steps, 1))
        base_state = np.zeros((n_steps + 1, n))
        base_costate = np.zeros((n_steps + 1, n))

    state = np.zeros((n_steps + 1, n))
    costate = np.zeros((n_steps + 1, n))
    next_control = np.zeros((n_steps, n))
    metrics = []
    picard_stats = {
        "state_iterations": 0,
        "adjoint_iterations": 0,
        "max_state_iterations": 0,
        "max_adjoint_iterations": 0,
        "max_residual": 0.0,
    }
    converged = False
    iterations = 0

    for iterations in range(1, cfg.max_outer + 1):
        state[0] = y0h
        for level in range(1, n_steps + 1):
            t = times[level]
            ops, systems = cache.at(t)
            control_rhs = k * (ops.M @ control[level - 1])
            state[level], rep = state_step(
                state[level - 1], control_rhs, source_rhs[level],
                ops, cfg.step, systems=systems, t=t,
            )
            picard_stats["state_iterations"] += rep.iterations
            picard_stats["max_state_iterations"] = max(
                picard_stats["max_state_iterations"], rep.iterations
            )
            picard_stats["max_residual"] = max(
                picard_stats["max_residual"], rep.residual
            )

        costate[n_steps] = 0.0
        for level in range(n_steps, 0, -1):
            ops, systems = cache.at(times[level - 1])
            costate[level - 1], rep = adjoint_step(
                costate[level], state[level], ydata_rhs[level],
                ops, cfg.step, systems=systems, t=times[level - 1],
            )
            next_control[level - 1] = clamp_control(
                costate[level - 1], lam, lower, upper
            )
            picard_stats["adjoint_iterations"] += rep.iterations
            picard_stats["max_adjoint_iterations"] = max(
                picard_stats["max_adjoint_iterations"], rep.iterations
            )
            picard_stats["max_residual"] = max(
                picard_stats["max_residual"], rep.residual
            )

        state_change = _max_relative_change(state, base_state)
        costate_change = _max_relative_change(costate, base_costate)
        control_change = _max_relative_change(next_control, control)
        metrics.append((state_change, costate_change, control_change))
        if max(state_change, costate_change, control_change) <= cfg.outer_tol:
            converged = True
            break
        base_state = state.copy()
        base_costate = costate.copy()
        control = next_control.copy()

    trajectory = Trajectory(
        times=times,
        state=state.copy(),
        costate=costate.copy(),
        control=next_control.copy(),
    )
    report = OuterReport(
        iterations=iterations,
        converged=converged,
        metrics=metrics,
        wall_time=time.perf_counter() - started,
        picard=picard_stats,
    )
    if not converged:
        raise FixedPointFailure(
            f"outer loop did not converge in {cfg.max_outer} iterations "
            f"(last metrics {metrics[-1]})",
            report=report,
            trajectory=trajectory,
        )
    return trajectory, report


def cost_functional(trajectory, problem, mesh, quad_degree=4):
    """Discrete objective: right-endpoint rectangle rule in time.

    J = 1/2 sum_n k ( ||Y^n - y_d(., t_n)||^2 + lam ||U^n||^2 )
    with the control norm taken through the consistent mass matrix, exact
    for the P1 interpolant.
    """
    from .assembly import assemble_mass

    mass = assemble_mass(mesh)
    k = float(trajectory.times[1] - trajectory.times[0])
    total = 0.0
    for level in range(1, trajectory.n_steps + 1):
        t = trajectory.times[level]
        misfit = l2_error(
            trajectory.state[level], problem.desired_state, t, mesh,
            quad_degree=quad_degree,
        )
        u = trajectory.control[level - 1]
        total += k * (misfit**2 + problem.lam * float(u @ (mass @ u)))
    return 0.5 * total
