"""Experiment drivers: configuration files, refinement studies, layer runs.

Configuration is TOML with five sections.  [problem] names a built-in
problem (or a custom factory "module:function") and may override the time
horizon.  [mesh] lists cell counts per side.  [time] fixes the step, either
directly (``step``) or proportional to the mesh width (``step_factor``, so
k = step_factor * h0).  [solver] collects tolerances, iteration caps, the
scheme, and the initial state treatment.  [output] says where results land
and which artifacts to write.

A refinement study solves every mesh in the list and reports errors of the
final-time state, the initial-time co-state, and the first-step control
against the exact solution, with observed orders between consecutive
levels.  A layer run solves selected meshes and reports bound violations of
the computed fields against the exact range, alongside VTK snapshots.
"""

import importlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .analysis import ErrorRecord, attach_orders, l2_error, h1_error, oscillation_indicator, write_error_csv
from .assembly import build_operators
from .errors import ConfigError, InvalidArgumentError
from .limiter import (
    CorrectionFactors,
    fluxes_mass,
    fluxes_state_diffusion,
    kuzmin_factors,
    write_factor_csv,
    STATE_MASS,
)
from .mesh import build_uniform_unit_square
from .problems import builtin_problem
from .solver import (
    SolverConfig,
    cost_functional,
    initial_state_coefficients,
    solve_ocp,
)
from .stepping import SCHEMES, StepConfig, StepSystems, state_step
from .vtkio import write_vtk

WORKERS_ENV = "AFC_OCP_WORKERS"


@dataclass
class ExperimentConfig:
    """Validated contents of one TOML configuration file."""

    problem: str
    mesh_sizes: list
    horizon: float = None
    factory: str = None
    step: float = None
    step_factor: float = None
    scheme: str = "afc"
    outer_tol: float = 1e-6
    max_outer: int = 100
    inner_tol: float = 1e-10
    max_inner: int = 50
    linear_tol: float = 1e-10
    relaxation: float = 1.0
    initial_state: str = "ritz"
    output_dir: str = "results"
    write_vtk_files: bool = True
    write_csv_files: bool = True
    write_json_files: bool = True
    error_quad_degree: int = None
    workers: int = 1

    def step_for(self, m):
        if self.step is not None:
            return self.step
        return self.step_factor / m

    def solver_config(self, m):
        return SolverConfig(
            step=StepConfig(
                k=self.step_for(m),
                inner_tol=self.inner_tol,
                max_inner=self.max_inner,
                linear_tol=self.linear_tol,
                scheme=self.scheme,
                relaxation=self.relaxation,
            ),
            outer_tol=self.outer_tol,
            max_outer=self.max_outer,
            initial_state=self.initial_state,
        )

    def make_problem(self):
        if self.factory is not None:
            mod_name, _, attr = self.factory.partition(":")
            if not attr:
                raise ConfigError(
                    f"custom factory {self.factory!r} must look like 'module:function'"
                )
            try:
                factory = getattr(importlib.import_module(mod_name), attr)
            except (ImportError, AttributeError) as exc:
                raise ConfigError(f"cannot load factory {self.factory!r}: {exc}")
            return factory() if self.horizon is None else factory(horizon=self.horizon)
        try:
            return builtin_problem(self.problem, horizon=self.horizon)
        except InvalidArgumentError as exc:
            raise ConfigError(str(exc))


def _take(section, key, kinds, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    value = section.pop(key)
    if kinds is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"key {key!r} must be a boolean")
        return value
    if kinds is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"key {key!r} must be an integer")
        return value
    if kinds is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key {key!r} must be a number")
        return float(value)
    if kinds is str:
        if not isinstance(value, str):
            raise ConfigError(f"key {key!r} must be a string")
        return value
    raise AssertionError(kinds)


def load_config(path):
    """Parse and validate a TOML experiment configuration."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"configuration file {path} does not exist")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}")

    known = {"problem", "mesh", "time", "solver", "output"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")

    prob = dict(raw.get("problem", {}))
    name = _take(prob, "name", str, required=True)
    horizon = _take(prob, "horizon", float)
    factory = _take(prob, "factory", str)
    if prob:
        raise ConfigError(f"unknown [problem] keys: {', '.join(sorted(prob))}")

    meshsec = dict(raw.get("mesh", {}))
    sizes = meshsec.pop("sizes", None)
    if not isinstance(sizes, list) or not sizes or not all(
        isinstance(m, int) and not isinstance(m, bool) and m >= 2 for m in sizes
    ):
        raise ConfigError("[mesh] sizes must be a non-empty list of integers >= 2")
    if meshsec:
        raise ConfigError(f"unknown [mesh] keys: {', '.join(sorted(meshsec))}")

    timesec = dict(raw.get("time", {}))
    step = _take(timesec, "step", float)
    step_factor = _take(timesec, "step_factor", float)
    if (step is None) == (step_factor is None):
        raise ConfigError("[time] needs exactly one of 'step' or 'step_factor'")
    if (step is not None and step <= 0) or (step_factor is not None and step_factor <= 0):
        raise ConfigError("[time] step sizes must be positive")
    if timesec:
        raise ConfigError(f"unknown [time] keys: {', '.join(sorted(timesec))}")

    solversec = dict(raw.get("solver", {}))
    scheme = _take(solversec, "scheme", str, default="afc")
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}")
    outer_tol = _take(solversec, "outer_tol", float, default=1e-6)
    max_outer = _take(solversec, "max_outer", int, default=100)
    inner_tol = _take(solversec, "inner_tol", float, default=1e-10)
    max_inner = _take(solversec, "max_inner", int, default=50)
    linear_tol = _take(solversec, "linear_tol", float, default=1e-10)
    relaxation = _take(solversec, "relaxation", float, default=1.0)
    if not 0.0 < relaxation <= 1.0:
        raise ConfigError(f"relaxation must lie in (0, 1], got {relaxation}")
    initial_state = _take(solversec, "initial_state", str, default="ritz")
    if initial_state not in ("ritz", "interpolate"):
        raise ConfigError(f"unknown initial state mode {initial_state!r}")
    if solversec:
        raise ConfigError(f"unknown [solver] keys: {', '.join(sorted(solversec))}")

    outsec = dict(raw.get("output", {}))
    output_dir = _take(outsec, "directory", str, default="results")
    write_vtk_files = _take(outsec, "vtk", bool, default=True)
    write_csv_files = _take(outsec, "csv", bool, default=True)
    write_json_files = _take(outsec, "json", bool, default=True)
    error_quad_degree = _take(outsec, "error_quad_degree", int)
    if outsec:
        raise ConfigError(f"unknown [output] keys: {', '.join(sorted(outsec))}")

    workers_raw = os.environ.get(WORKERS_ENV, "1")
    try:
        workers = max(1, int(workers_raw))
    except ValueError:
        raise ConfigError(
            f"environment variable {WORKERS_ENV}={workers_raw!r} is not an integer"
        )

    return ExperimentConfig(
        problem=name,
        mesh_sizes=list(sizes),
        horizon=horizon,
        factory=factory,
        step=step,
        step_factor=step_factor,
        scheme=scheme,
        outer_tol=outer_tol,
        max_outer=max_outer,
        inner_tol=inner_tol,
        max_inner=max_inner,
        linear_tol=linear_tol,
        relaxation=relaxation,
        initial_state=initial_state,
        output_dir=output_dir,
        write_vtk_files=write_vtk_files,
        write_csv_files=write_csv_files,
        write_json_files=write_json_files,
        error_quad_degree=error_quad_degree,
        workers=workers,
    )


def _error_degree(cfg, problem):
    if cfg.error_quad_degree is not None:
        return cfg.error_quad_degree
    # Layer solutions vary fast inside elements; spend extra points there.
    return 7 if problem.mu < 1e-3 else 4


@dataclass
class LevelResult:
    """One refinement level of a study."""

    m: int
    h0: float
    k: float
    state: ErrorRecord
    costate: ErrorRecord
    control: ErrorRecord
    outer_iterations: int
    wall_time: float
    cost: float


@dataclass
class ConvergenceStudy:
    levels: list = field(default_factory=list)

    def records(self, which):
        return [getattr(level, which) for level in self.levels]


def _solve_level(cfg, m):
    problem = cfg.make_problem()
    mesh = build_uniform_unit_square(m)
    solver_cfg = cfg.solver_config(m)
    trajectory, report = solve_ocp(problem, mesh, solver_cfg)
    return problem, mesh, solver_cfg, trajectory, report


def run_convergence_study(cfg):
    """Solve each mesh in the list and tabulate errors and observed orders."""
    probe = cfg.make_problem()
    if probe.exact is None:
        raise ConfigError("a refinement study needs a problem with an exact solution")
    deg = _error_degree(cfg, probe)

    def level_errors(m):
        problem, mesh, solver_cfg, trajectory, report = _solve_level(cfg, m)
        h0 = 1.0 / m
        k = solver_cfg.step.k
        tend = trajectory.times[-1]
        ex = problem.exact
        state_rec = ErrorRecord(
            h0=h0, k=k,
            err_l2=l2_error(trajectory.state[-1], ex.y, tend, mesh, deg),
            err_h1=h1_error(trajectory.state[-1], ex.y, ex.y_grad, tend, mesh, deg),
        )
        costate_rec = ErrorRecord(
            h0=h0, k=k,
            err_l2=l2_error(trajectory.costate[0], ex.p, 0.0, mesh, deg),
            err_h1=h1_error(trajectory.costate[0], ex.p, ex.p_grad, 0.0, mesh, deg),
        )
        # The first-step control comes from the co-state at the foot of the
        # step, so it approximates the exact control at time zero.
        control_rec = ErrorRecord(
            h0=h0, k=k,
            err_l2=l2_error(
                trajectory.control_at(1),
                lambda x, y, t: problem.exact_control(x, y, t),
                0.0, mesh, deg,
            ),
        )
        cost = cost_functional(trajectory, problem, mesh, quad_degree=deg)
        return LevelResult(
            m=m, h0=h0, k=k,
            state=state_rec, costate=costate_rec, control=control_rec,
            outer_iterations=report.iterations,
            wall_time=report.wall_time,
            cost=cost,
        )

    if cfg.workers > 1 and len(cfg.mesh_sizes) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            levels = list(pool.map(level_errors, cfg.mesh_sizes))
    else:
        levels = [level_errors(m) for m in cfg.mesh_sizes]

    study = ConvergenceStudy(levels=levels)
    attach_orders(study.records("state"))
    attach_orders(study.records("costate"))
    attach_orders(study.records("control"))

    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    if cfg.write_csv_files:
        write_error_csv(study.records("state"), outdir / "convergence_state.csv")
        write_error_csv(study.records("costate"), outdir / "convergence_costate.csv")
        write_error_csv(
            study.records("control"), outdir / "convergence_control.csv",
            include_h1=False,
        )
    if cfg.write_json_files:
        summary = {
            "problem": cfg.problem,
            "scheme": cfg.scheme,
            "levels": [
                {
                    "m": lv.m,
                    "h0": lv.h0,
                    "k": lv.k,
                    "outer_iterations": lv.outer_iterations,
                    "wall_time": lv.wall_time,
                    "cost": lv.cost,
                    "state_err_l2": lv.state.err_l2,
                    "state_err_h1": lv.state.err_h1,
                    "costate_err_l2": lv.costate.err_l2,
                    "costate_err_h1": lv.costate.err_h1,
                    "control_err_l2": lv.control.err_l2,
                }
                for lv in study.levels
            ],
        }
        with open(outdir / "convergence_summary.json", "w") as fh:
            json.dump(summary, fh, indent=2)
    return study


def _exact_range(problem, t, samples=401):
    """Range of the exact state on a fine sampling grid at one time."""
    side = np.linspace(0.0, 1.0, samples)
    x, y = np.meshgrid(side, side, indexing="xy")
    values = problem.exact.y(x, y, t)
    return float(np.min(values)), float(np.max(values))


@dataclass
class LayerRun:
    """Solution and bound-violation summary of one layer mesh."""

    m: int
    trajectory: object
    report: object
    oscillation: dict


def run_layer_experiment(cfg):
    """Solve the configured meshes and measure violations of the exact bounds."""
    runs = []
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    for m in cfg.mesh_sizes:
        problem, mesh, solver_cfg, trajectory, report = _solve_level(cfg, m)
        entry = {
            "problem": cfg.problem,
            "scheme": cfg.scheme,
            "m": m,
            "outer_iterations": report.iterations,
            "wall_time": report.wall_time,
        }
        if problem.exact is not None:
            tend = trajectory.times[-1]
            lo, hi = _exact_range(problem, tend)
            under, over = oscillation_indicator(trajectory.state[-1], lo, hi)
            entry["state_final"] = {
                "exact_min": lo, "exact_max": hi,
                "min": float(trajectory.state[-1].min()),
                "max": float(trajectory.state[-1].max()),
                "undershoot": under, "overshoot": over,
            }
            glo = min(_exact_range(problem, t)[0] for t in trajectory.times)
            ghi = max(_exact_range(problem, t)[1] for t in trajectory.times)
            gunder, gover = oscillation_indicator(trajectory.state.ravel(), glo, ghi)
            entry["state_global"] = {
                "exact_min": glo, "exact_max": ghi,
                "min": float(trajectory.state.min()),
                "max": float(trajectory.state.max()),
                "undershoot": gunder, "overshoot": gover,
            }
        if cfg.write_json_files:
            with open(outdir / f"oscillation_m{m}.json", "w") as fh:
                json.dump(entry, fh, indent=2)
        if cfg.write_vtk_files:
            write_vtk(
                outdir / f"fields_initial_m{m}.vtk", mesh,
                {
                    "state": trajectory.state[0],
                    "costate": trajectory.costate[0],
                    "control": trajectory.control_at(1),
                },
            )
            write_vtk(
                outdir / f"fields_final_m{m}.vtk", mesh,
                {
                    "state": trajectory.state[-1],
                    "costate": trajectory.costate[-1],
                    "control": trajectory.control_at(trajectory.n_steps),
                },
            )
        runs.append(LayerRun(m=m, trajectory=trajectory, report=report, oscillation=entry))
    return runs


def run_limiter_dump(cfg):
    """Run one state step on the coarsest mesh and dump fluxes and factors.

    The dump reflects the converged Picard iterate of the first time level:
    one CSV per flux family, rows i, j, flux, a_ij.
    """
    problem = cfg.make_problem()
    m = cfg.mesh_sizes[0]
    mesh = build_uniform_unit_square(m)
    solver_cfg = cfg.solver_config(m)
    step_cfg = solver_cfg.step
    k = step_cfg.k
    ops = build_operators(mesh, problem.velocity, problem.mu, t=0.0 if not problem.velocity_time_dependent else k)
    systems = StepSystems(ops, step_cfg)
    y0h = initial_state_coefficients(problem, mesh, solver_cfg.initial_state)
    from .assembly import load_vector

    source_rhs = k * load_vector(problem.source, k, mesh)
    control_rhs = np.zeros(mesh.n_nodes)
    alpha, _ = state_step(
        y0h, control_rhs, source_rhs, ops, step_cfg, systems=systems, t=k
    )

    fd = fluxes_state_diffusion(ops.d_edge, alpha, mesh.edges)
    fm = fluxes_mass(ops.m_edge, alpha, y0h, mesh.edges, kind=STATE_MASS)
    if cfg.scheme == "galerkin":
        ones = np.ones(mesh.n_edges)
        ad = CorrectionFactors(ones, systems.q_d, fd.kind)
        am = CorrectionFactors(ones, systems.q_mass, fm.kind)
    else:
        ad = kuzmin_factors(mesh, fd, alpha, systems.q_d)
        am = kuzmin_factors(mesh, fm, alpha, systems.q_mass)

    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = (
        outdir / "limiter_state_diffusion.csv",
        outdir / "limiter_state_mass.csv",
    )
    write_factor_csv(paths[0], mesh.edges, fd, ad)
    write_factor_csv(paths[1], mesh.edges, fm, am)
    return paths
