"""Configuration parsing, experiment drivers, file artifacts, and the CLI."""

import csv
import json

import numpy as np
import pytest

from afc_ocp.cli import main
from afc_ocp.errors import ConfigError
from afc_ocp.experiments import (
    WORKERS_ENV,
    load_config,
    run_convergence_study,
    run_layer_experiment,
    run_limiter_dump,
)
from afc_ocp.mesh import build_uniform_unit_square
from afc_ocp.vtkio import write_vtk


def write_toml(tmp_path, text, name="config.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


FULL_CONFIG = """
[problem]
name = "convergence"

[mesh]
sizes = [3, 6]

[time]
step_factor = 0.5

[solver]
scheme = "afc"
outer_tol = 1e-6
max_outer = 40
inner_tol = 1e-10
max_inner = 60
relaxation = 0.8
initial_state = "ritz"

[output]
directory = "{out}"
vtk = {vtk}
csv = true
json = true
"""


def full_config(tmp_path, vtk="false", **extra):
    text = FULL_CONFIG.format(out=(tmp_path / "out").as_posix(), vtk=vtk)
    return write_toml(tmp_path, text)


def test_load_config_full(tmp_path):
    cfg = load_config(full_config(tmp_path))
    assert cfg.problem == "convergence"
    assert cfg.mesh_sizes == [3, 6]
    assert cfg.step is None
    assert cfg.step_factor == 0.5
    assert cfg.step_for(4) == pytest.approx(0.125)
    assert cfg.max_inner == 60
    assert cfg.write_vtk_files is False
    solver_cfg = cfg.solver_config(5)
    assert solver_cfg.step.k == pytest.approx(0.1)
    assert solver_cfg.step.max_inner == 60
    assert solver_cfg.step.relaxation == pytest.approx(0.8)
    assert solver_cfg.max_outer == 40


def test_load_config_defaults(tmp_path):
    path = write_toml(
        tmp_path,
        '[problem]\nname = "convergence"\n'
        "[mesh]\nsizes = [4]\n[time]\nstep = 0.25\n",
    )
    cfg = load_config(path)
    assert cfg.scheme == "afc"
    assert cfg.outer_tol == 1e-6
    assert cfg.relaxation == 1.0
    assert cfg.output_dir == "results"
    assert cfg.write_vtk_files and cfg.write_csv_files and cfg.write_json_files
    assert cfg.step_for(4) == 0.25
    assert cfg.workers == 1


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("[grid]\nm = 2\n", "unknown sections"),
        ('[problem]\nname = "convergence"\ntitle = "x"\n[mesh]\nsizes=[4]\n[time]\nstep=0.1\n', "unknown [problem] keys"),
        ("[problem]\nhorizon = 1.0\n[mesh]\nsizes=[4]\n[time]\nstep=0.1\n", "missing required key 'name'"),
        ('[problem]\nname = "convergence"\n[mesh]\nsizes = []\n[time]\nstep=0.1\n', "sizes"),
        ('[problem]\nname = "convergence"\n[mesh]\nsizes = [1]\n[time]\nstep=0.1\n', "sizes"),
        ('[problem]\nname = "convergence"\n[mesh]\nsizes = [4.5]\n[time]\nstep=0.1\n', "sizes"),
        ('[problem]\nname = "convergence"\n[mesh]\nsizes = [4]\n', "exactly one"),
        ('[problem]\nname = "convergence"\n[mesh]\nsizes = [4]\n[time]\nstep=0.1\nstep_factor=0.5\n', "exactly one"),
        ('[problem]\nname = "convergence"\n[mesh]\nsizes = [4]\n[time]\nstep=-0.1\n', "positive"),
        ('[problem]\nname = "convergence"\n[mesh]\nsizes = [4]\n[time]\nstep=0.1\n[solver]\nscheme="magic"\n', "unknown scheme"),
        ('[problem]\nname = "convergence"\n[mesh]\nsizes = [4]\n[time]\nstep=0.1\n[solver]\ninitial_state="spline"\n', "initial state"),
        ('[problem]\nname = "convergence"\n[mesh]\nsizes = [4]\n[time]\nstep=0.1\n[solver]\nmax_outer=3.5\n', "integer"),
        ('[problem]\nname = "convergence"\n[mesh]\nsizes = [4]\n[time]\nstep=0.1\n[solver]\nrelaxation=0.0\n', "relaxation"),
        ('[problem]\nname = "convergence"\n[mesh]\nsizes = [4]\n[time]\nstep=0.1\n[solver]\nrelaxation=1.5\n', "relaxation"),
        ('[problem]\nname = "convergence"\n[mesh]\nsizes = [4]\n[time]\nstep=0.1\n[output]\nvtk="yes"\n', "boolean"),
    ],
)
def test_load_config_rejects(tmp_path, text, fragment):
    path = write_toml(tmp_path, text)
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert fragment in str(err.value)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_load_config_bad_toml(tmp_path):
    path = write_toml(tmp_path, "[problem\nname =")
    with pytest.raises(ConfigError):
        load_config(path)


def test_workers_from_environment(tmp_path, monkeypatch):
    path = write_toml(
        tmp_path,
        '[problem]\nname = "convergence"\n[mesh]\nsizes=[4]\n[time]\nstep=0.25\n',
    )
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert load_config(path).workers == 3
    monkeypatch.setenv(WORKERS_ENV, "zero")
    with pytest.raises(ConfigError):
        load_config(path)


def test_custom_problem_factory(tmp_path):
    path = write_toml(
        tmp_path,
        '[problem]\nname = "custom"\nfactory = "custom_problems:smooth_short"\n'
        "horizon = 0.5\n[mesh]\nsizes=[4]\n[time]\nstep=0.25\n",
    )
    problem = load_config(path).make_problem()
    assert problem.name == "convergence"
    assert problem.horizon == 0.5


def test_factory_errors(tmp_path):
    base = '[mesh]\nsizes=[4]\n[time]\nstep=0.25\n'
    bad_shape = write_toml(
        tmp_path, '[problem]\nname="x"\nfactory="no_colon"\n' + base, "a.toml"
    )
    with pytest.raises(ConfigError):
        load_config(bad_shape).make_problem()
    bad_module = write_toml(
        tmp_path, '[problem]\nname="x"\nfactory="nope_mod:f"\n' + base, "b.toml"
    )
    with pytest.raises(ConfigError):
        load_config(bad_module).make_problem()
    bad_name = write_toml(
        tmp_path, '[problem]\nname="mystery"\n' + base, "c.toml"
    )
    with pytest.raises(ConfigError):
        load_config(bad_name).make_problem()


def test_convergence_study_artifacts(tmp_path):
    cfg = load_config(full_config(tmp_path))
    study = run_convergence_study(cfg)
    assert [lv.m for lv in study.levels] == [3, 6]
    state = study.records("state")
    assert state[0].order_l2 is None
    assert state[1].order_l2 is not None and state[1].order_l2 > 1.0
    assert all(lv.cost >= 0.0 for lv in study.levels)

    outdir = tmp_path / "out"
    for name in (
        "convergence_state.csv",
        "convergence_costate.csv",
        "convergence_control.csv",
    ):
        assert (outdir / name).is_file()
    with open(outdir / "convergence_state.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["h0", "err_L2", "order_L2", "err_H1", "order_H1"]
    assert len(rows) == 3
    assert float(rows[1][1]) > float(rows[2][1])

    with open(outdir / "convergence_summary.json") as fh:
        summary = json.load(fh)
    assert summary["problem"] == "convergence"
    assert len(summary["levels"]) == 2
    assert summary["levels"][1]["m"] == 6
    assert summary["levels"][1]["state_err_l2"] == pytest.approx(state[1].err_l2)


def test_convergence_study_parallel_matches_serial(tmp_path, monkeypatch):
    serial = run_convergence_study(load_config(full_config(tmp_path)))
    monkeypatch.setenv(WORKERS_ENV, "2")
    parallel = run_convergence_study(load_config(full_config(tmp_path)))
    for a, b in zip(serial.records("state"), parallel.records("state")):
        assert a.err_l2 == b.err_l2
        assert a.err_h1 == b.err_h1


def test_convergence_study_needs_exact_solution(tmp_path):
    path = write_toml(
        tmp_path,
        '[problem]\nname = "custom"\nfactory = "custom_problems:smooth_short"\n'
        "[mesh]\nsizes=[4]\n[time]\nstep=0.25\n",
    )
    cfg = load_config(path)
    problem = cfg.make_problem()
    assert problem.exact is not None  # factory keeps the exact solution

    import dataclasses

    import custom_problems

    def stripped(horizon=None):
        return dataclasses.replace(
            custom_problems.smooth_short(horizon=horizon), exact=None
        )

    monkey_name = "custom_problems_stripped"
    import sys
    import types

    mod = types.ModuleType(monkey_name)
    mod.make = stripped
    sys.modules[monkey_name] = mod
    try:
        path2 = write_toml(
            tmp_path,
            f'[problem]\nname = "custom"\nfactory = "{monkey_name}:make"\n'
            "[mesh]\nsizes=[4]\n[time]\nstep=0.25\n",
            "strip.toml",
        )
        with pytest.raises(ConfigError):
            run_convergence_study(load_config(path2))
    finally:
        del sys.modules[monkey_name]


def test_layer_experiment_artifacts(tmp_path):
    path = write_toml(
        tmp_path,
        '[problem]\nname = "interior_layer"\n[mesh]\nsizes = [5]\n'
        "[time]\nstep = 0.05\n[solver]\nmax_inner = 200\n"
        f'[output]\ndirectory = "{(tmp_path / "layer").as_posix()}"\n',
    )
    runs = run_layer_experiment(load_config(path))
    assert len(runs) == 1
    run = runs[0]
    assert run.m == 5
    assert run.trajectory.n_steps == 2
    entry = run.oscillation
    assert entry["scheme"] == "afc"
    assert "state_final" in entry and "state_global" in entry
    assert entry["state_final"]["undershoot"] >= 0.0

    outdir = tmp_path / "layer"
    with open(outdir / "oscillation_m5.json") as fh:
        on_disk = json.load(fh)
    assert on_disk["m"] == 5
    assert on_disk["state_final"]["exact_min"] <= on_disk["state_final"]["exact_max"]
    assert (outdir / "fields_initial_m5.vtk").is_file()
    assert (outdir / "fields_final_m5.vtk").is_file()

    text = (outdir / "fields_final_m5.vtk").read_text().splitlines()
    assert text[0].startswith("# vtk DataFile")
    assert "DATASET UNSTRUCTURED_GRID" in text
    assert "POINTS 36 double" in text
    assert "CELLS 50 200" in text
    assert "POINT_DATA 36" in text
    for name in ("state", "costate", "control"):
        assert f"SCALARS {name} double 1" in text


def test_limiter_dump(tmp_path):
    outdir = (tmp_path / "dump").as_posix()
    path = write_toml(
        tmp_path,
        '[problem]\nname = "convergence"\n[mesh]\nsizes = [4]\n'
        f'[time]\nstep = 0.1\n[output]\ndirectory = "{outdir}"\n',
    )
    paths = run_limiter_dump(load_config(path))
    mesh = build_uniform_unit_square(4)
    for written in paths:
        with open(written, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["i", "j", "flux", "a_ij"]
        assert len(rows) == mesh.n_edges + 1
        factors = np.array([float(r[3]) for r in rows[1:]])
        assert factors.min() >= 0.0
        assert factors.max() <= 1.0

    galerkin = write_toml(
        tmp_path,
        '[problem]\nname = "convergence"\n[mesh]\nsizes = [4]\n'
        '[time]\nstep = 0.1\n[solver]\nscheme = "galerkin"\n'
        f'[output]\ndirectory = "{outdir}2"\n',
        "galerkin.toml",
    )
    for written in run_limiter_dump(load_config(galerkin)):
        with open(written, newline="") as fh:
            rows = list(csv.reader(fh))
        assert all(float(r[3]) == 1.0 for r in rows[1:])


def test_vtk_field_shape_is_checked(tmp_path):
    from afc_ocp.errors import InvalidArgumentError

    mesh = build_uniform_unit_square(3)
    with pytest.raises(InvalidArgumentError):
        write_vtk(tmp_path / "bad.vtk", mesh, {"state": np.zeros(5)})


def test_cli_convergence_and_exit_codes(tmp_path, capsys):
    code = main(["convergence", str(full_config(tmp_path))])
    out = capsys.readouterr().out
    assert code == 0
    assert "m=3" in out and "m=6" in out
    assert "order" in out

    assert main(["run", str(tmp_path / "missing.toml")]) == 1
    err = capsys.readouterr().err
    assert "configuration error" in err


def test_cli_limiter_dump(tmp_path, capsys):
    outdir = (tmp_path / "cli_dump").as_posix()
    path = write_toml(
        tmp_path,
        '[problem]\nname = "convergence"\n[mesh]\nsizes = [4]\n'
        f'[time]\nstep = 0.1\n[output]\ndirectory = "{outdir}"\n',
    )
    assert main(["limiter-dump", str(path)]) == 0
    out = capsys.readouterr().out
    assert "limiter_state_diffusion.csv" in out
    assert "limiter_state_mass.csv" in out


def test_cli_reports_solver_failure(tmp_path, capsys):
    path = write_toml(
        tmp_path,
        '[problem]\nname = "convergence"\n[mesh]\nsizes = [4]\n'
        "[time]\nstep = 0.25\n[solver]\nmax_outer = 1\nouter_tol = 1e-15\n"
        f'[output]\ndirectory = "{(tmp_path / "fail").as_posix()}"\nvtk = false\n',
    )
    assert main(["run", str(path)]) == 2
    assert "solve failed" in capsys.readouterr().err
