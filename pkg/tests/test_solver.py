"""Outer fixed-point loop behaviour: convergence, warm starts, trajectory
invariants, and failure reporting."""

import dataclasses

import numpy as np
import pytest

from afc_ocp.errors import FixedPointFailure, InvalidArgumentError
from afc_ocp.mesh import build_uniform_unit_square
from afc_ocp.problems import builtin_problem
from afc_ocp.solver import (
    OuterReport,
    SolverConfig,
    Trajectory,
    cost_functional,
    initial_state_coefficients,
    solve_ocp,
)
from afc_ocp.stepping import StepConfig


@pytest.fixture(scope="module")
def smooth_setup():
    problem = builtin_problem("convergence")
    mesh = build_uniform_unit_square(8)
    cfg = SolverConfig(step=StepConfig(k=0.05))
    return problem, mesh, cfg


@pytest.fixture(scope="module")
def smooth_solution(smooth_setup):
    problem, mesh, cfg = smooth_setup
    return solve_ocp(problem, mesh, cfg)


def test_smooth_problem_converges(smooth_solution):
    trajectory, report = smooth_solution
    assert report.converged
    assert report.iterations <= 100
    assert len(report.metrics) == report.iterations
    assert max(report.final_metrics) <= 1e-6


def test_trajectory_invariants(smooth_setup, smooth_solution):
    problem, mesh, cfg = smooth_setup
    trajectory, _ = smooth_solution
    n = trajectory.n_steps
    assert trajectory.state.shape == (n + 1, mesh.n_nodes)
    assert trajectory.costate.shape == (n + 1, mesh.n_nodes)
    assert trajectory.control.shape == (n, mesh.n_nodes)
    # Terminal condition for the adjoint and initial condition for the state.
    assert np.all(trajectory.costate[-1] == 0.0)
    y0 = initial_state_coefficients(problem, mesh, cfg.initial_state)
    assert np.array_equal(trajectory.state[0], y0)
    lo, hi = problem.bounds
    assert trajectory.control.min() >= lo - 1e-14
    assert trajectory.control.max() <= hi + 1e-14
    # Dirichlet rows stay pinned at every level.
    assert np.all(trajectory.state[:, mesh.boundary_mask] == 0.0)
    assert np.all(trajectory.costate[:, mesh.boundary_mask] == 0.0)
    assert np.allclose(trajectory.times, np.linspace(0.0, problem.horizon, n + 1))


def test_level_accessors(smooth_solution):
    trajectory, _ = smooth_solution
    assert np.array_equal(trajectory.state_at(0), trajectory.state[0])
    assert np.array_equal(trajectory.costate_at(2), trajectory.costate[2])
    assert np.array_equal(trajectory.control_at(1), trajectory.control[0])
    with pytest.raises(InvalidArgumentError):
        trajectory.control_at(0)
    with pytest.raises(InvalidArgumentError):
        trajectory.control_at(trajectory.n_steps + 1)


def test_control_is_clamped_scaled_costate(smooth_setup, smooth_solution):
    # The control driving step n is read off the co-state at the foot of
    # that step.
    problem, mesh, _ = smooth_setup
    trajectory, _ = smooth_solution
    for n in (1, trajectory.n_steps):
        u = trajectory.control_at(n)
        p = trajectory.costate_at(n - 1)
        target = -p / problem.lam
        lo, hi = problem.bounds
        expected = np.minimum(np.maximum(target, lo), hi)
        assert np.abs(u - expected).max() < 1e-12


def test_solver_is_deterministic(smooth_setup, smooth_solution):
    problem, mesh, cfg = smooth_setup
    first, _ = smooth_solution
    second, _ = solve_ocp(problem, mesh, cfg)
    assert np.array_equal(first.state, second.state)
    assert np.array_equal(first.costate, second.costate)
    assert np.array_equal(first.control, second.control)


def test_warm_start_resolve_takes_one_iteration(smooth_setup, smooth_solution):
    problem, mesh, cfg = smooth_setup
    trajectory, _ = smooth_solution
    warm, report = solve_ocp(problem, mesh, cfg, warm_start=trajectory)
    assert report.converged
    assert report.iterations == 1
    assert max(report.final_metrics) <= cfg.outer_tol


def test_fixed_point_failure_carries_partial_result(smooth_setup):
    problem, mesh, cfg = smooth_setup
    strict = dataclasses.replace(cfg, max_outer=1, outer_tol=1e-14)
    with pytest.raises(FixedPointFailure) as err:
        solve_ocp(problem, mesh, strict)
    failure = err.value
    assert isinstance(failure.report, OuterReport)
    assert not failure.report.converged
    assert failure.report.iterations == 1
    assert isinstance(failure.trajectory, Trajectory)
    assert failure.trajectory.state.shape[1] == mesh.n_nodes


def test_zero_data_problem_is_fixed_immediately():
    zero = lambda x, y, t: np.zeros_like(np.asarray(x, dtype=float))
    problem = builtin_problem("convergence")
    problem = dataclasses.replace(
        problem,
        source=zero,
        desired_state=zero,
        initial_state=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        initial_state_grad=None,
        exact=None,
    )
    mesh = build_uniform_unit_square(4)
    cfg = SolverConfig(step=StepConfig(k=0.25), initial_state="interpolate")
    trajectory, report = solve_ocp(problem, mesh, cfg)
    assert report.iterations == 1
    assert np.all(trajectory.state == 0.0)
    assert np.all(trajectory.costate == 0.0)
    assert np.all(trajectory.control == 0.0)


def test_control_seed_is_projected_onto_the_box():
    # With a box excluding zero the first sweep must already use an
    # admissible control: the zero-data solve then reaches its fixed point
    # (all control at the bound nearest zero) in two iterations, whereas an
    # unprojected zero seed needs a third sweep to settle the state.
    zero = lambda x, y, t: np.zeros_like(np.asarray(x, dtype=float))
    problem = builtin_problem("convergence")
    problem = dataclasses.replace(
        problem,
        source=zero,
        desired_state=zero,
        initial_state=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        initial_state_grad=None,
        exact=None,
        bounds=(-5.0, -1.0),
    )
    mesh = build_uniform_unit_square(4)
    cfg = SolverConfig(step=StepConfig(k=0.25), initial_state="interpolate")
    trajectory, report = solve_ocp(problem, mesh, cfg)
    assert report.iterations == 2
    assert np.all(trajectory.control == -1.0)
    assert np.abs(trajectory.state).max() > 0.0


def test_horizon_must_tile_with_step(smooth_setup):
    problem, mesh, _ = smooth_setup
    cfg = SolverConfig(step=StepConfig(k=0.3))
    with pytest.raises(InvalidArgumentError):
        solve_ocp(problem, mesh, cfg)


def test_warm_start_shape_is_checked(smooth_setup, smooth_solution):
    problem, mesh, cfg = smooth_setup
    trajectory, _ = smooth_solution
    bad = Trajectory(
        times=trajectory.times[:-1],
        state=trajectory.state[:-1],
        costate=trajectory.costate[:-1],
        control=trajectory.control[:-1],
    )
    with pytest.raises(InvalidArgumentError):
        solve_ocp(problem, mesh, cfg, warm_start=bad)


def test_initial_state_modes_differ_but_agree_on_nodes(smooth_setup):
    problem, mesh, _ = smooth_setup
    ritz = initial_state_coefficients(problem, mesh, "ritz")
    interp = initial_state_coefficients(problem, mesh, "interpolate")
    exact_nodes = problem.initial_state(mesh.nodes[:, 0], mesh.nodes[:, 1])
    exact_nodes[mesh.boundary_mask] = 0.0
    assert np.array_equal(interp, exact_nodes)
    # The initial state of this problem is zero, so both projections agree.
    assert np.abs(ritz - interp).max() < 1e-12
    with pytest.raises(InvalidArgumentError):
        initial_state_coefficients(problem, mesh, "spline")


def test_ritz_initial_state_for_nonzero_field():
    base = builtin_problem("convergence")
    problem = dataclasses.replace(
        base,
        initial_state=lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y),
        initial_state_grad=lambda x, y: (
            np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
            np.pi * np.sin(np.pi * x) * np.cos(np.pi * y),
        ),
        exact=None,
    )
    mesh = build_uniform_unit_square(8)
    ritz = initial_state_coefficients(problem, mesh, "ritz")
    interp = initial_state_coefficients(problem, mesh, "interpolate")
    assert np.all(ritz[mesh.boundary_mask] == 0.0)
    # Projection and interpolation are distinct but close on a smooth field.
    assert not np.array_equal(ritz, interp)
    assert np.abs(ritz - interp).max() < 0.05 * np.abs(interp).max()


def test_cost_functional_is_finite_and_nonnegative(smooth_setup, smooth_solution):
    problem, mesh, _ = smooth_setup
    trajectory, _ = smooth_solution
    value = cost_functional(trajectory, problem, mesh)
    assert np.isfinite(value)
    assert value >= 0.0


def test_report_picard_stats(smooth_solution):
    _, report = smooth_solution
    stats = report.picard
    assert stats["max_state_iterations"] >= 1
    assert stats["max_adjoint_iterations"] >= 1
    assert stats["max_residual"] < 1e-8
    assert report.wall_time > 0.0
