import numpy as np
import pytest

from thermoporo import cases, cli
from thermoporo.analysis import CSV_HEADER
from thermoporo.mesh import build_unit_square
from thermoporo.solver import MFEMSolver, NewtonDivergence, SchemeConfig, State


def test_no_arguments_prints_usage(capsys):
    assert cli.main([]) == 1
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["--case", "test9"], ["--case", "test1", "--theta", "3"],
                                  ["--case", "test1", "--n-ladder", "8:4"],
                                  ["--case", "test1", "--emit", "pictures"],
                                  ["--case", "test1", "--n", "4", "--n-ladder", "4:8"],
                                  ["--case", "test1", "--n", "-2"],
                                  ["--bogus"]])
def test_bad_flags_exit_1(argv, tmp_path):
    assert cli.main(argv + ["--out", str(tmp_path)]) == 1


def test_halving():
    assert cli.halving(4, 32, integer=True) == [4, 8, 16, 32]
    assert cli.halving(0.1, 0.0125, integer=False) == pytest.approx([0.1, 0.05, 0.025, 0.0125])


def test_single_run_writes_requested_files(tmp_path, capsys):
    argv = ["--case", "test1", "--n", "2", "--dt", "0.25", "--emit", "errors,fields,energy,diagnostics",
            "--out", str(tmp_path)]
    assert cli.main(argv) == 0
    for name in ("p.csv", "T.csv", "u.csv", "energy.csv", "diagnostics.csv", "errors.csv"):
        assert (tmp_path / name).exists(), name
    p = cli.read_field_grid(tmp_path / "p.csv")
    assert p.shape == (9, 3)
    assert cli.read_field_grid(tmp_path / "u.csv").shape == (25, 4)
    assert (tmp_path / "errors.csv").read_text().splitlines()[0] == CSV_HEADER
    diag = (tmp_path / "diagnostics.csv").read_text().splitlines()
    assert diag[0] == "t,newton_iterations,final_increment,linear_residual" and len(diag) == 5
    assert len((tmp_path / "energy.csv").read_text().splitlines()) == 6
    assert "u-L2" in capsys.readouterr().out


def test_runs_are_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        assert cli.main(["--case", "test4", "--n", "2", "--dt", "0.5", "--emit", "errors,fields,diagnostics",
                         "--out", str(d)]) == 0
        outs.append({f.name: f.read_bytes() for f in sorted(d.iterdir())})
    assert outs[0] == outs[1]


def test_field_grid_round_trip(tmp_path):
    mesh = build_unit_square(2)
    solver = MFEMSolver(cases.test2(), mesh, SchemeConfig(dt=1e-5, t_final=1e-5))
    state = solver.step(solver.init_state())
    cli.emit_field_grid(state, solver.ops.ctx, tmp_path)
    np.testing.assert_array_equal(cli.read_field_grid(tmp_path / "p.csv")[:, 2], state.p)
    np.testing.assert_array_equal(cli.read_field_grid(tmp_path / "T.csv")[:, 2], state.T)
    u = cli.read_field_grid(tmp_path / "u.csv")
    n2 = solver.ops.n2
    np.testing.assert_array_equal(u[:, 2], state.u[:n2])
    np.testing.assert_array_equal(u[:, 3], state.u[n2:])


def test_zero_state_grid(tmp_path):
    mesh = build_unit_square(2)
    z = np.zeros(mesh.n_vertices)
    from thermoporo.assembly import FEContext
    ctx = FEContext.from_mesh(mesh)
    state = State(t=0.0, u=np.zeros(2 * ctx.dofs.n_p2), xi=z, eta=z, gamma=z, p=z, T=z, q=z)
    cli.emit_field_grid(state, ctx, tmp_path)
    assert not np.any(cli.read_field_grid(tmp_path / "p.csv")[:, 2])
    assert not np.any(cli.read_field_grid(tmp_path / "u.csv")[:, 2:])


def test_environment_overrides_out(tmp_path, monkeypatch):
    target = tmp_path / "env"
    monkeypatch.setenv("THERMOPORO_OUT", str(target))
    assert cli.main(["--case", "test1", "--n", "2", "--dt", "0.5", "--emit", "fields",
                     "--out", str(tmp_path / "flag")]) == 0
    assert (target / "p.csv").exists()
    assert not (tmp_path / "flag" / "p.csv").exists()


def test_solver_failure_exits_2(tmp_path, monkeypatch, capsys):
    def boom(self, state, t1=None):
        raise NewtonDivergence("no convergence", iterations=20, last_increment=1e-3)
    monkeypatch.setattr(MFEMSolver, "step", boom)
    assert cli.main(["--case", "test1", "--n", "2", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "iterations: 20" in err and "last_increment" in err


def test_spatial_ladder_csv(tmp_path, capsys):
    assert cli.main(["--case", "test1", "--n-ladder", "2:4", "--dt", "0.5", "--emit", "errors",
                     "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "errors.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER and len(lines) == 3
    assert "1/4" in capsys.readouterr().out


def test_time_ladder_csv(tmp_path):
    assert cli.main(["--case", "test2", "--n", "2", "--tau", "0.5", "--dt-ladder", "0.5:0.25",
                     "--emit", "errors", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "time_ladder.csv").read_text().splitlines()
    assert len(lines) == 3


def test_baseline_single_run(tmp_path):
    assert cli.main(["--case", "test3", "--n", "4", "--dt", "1e-3", "--tau", "1e-3", "--baseline",
                     "--emit", "fields", "--out", str(tmp_path)]) == 0
    assert cli.read_field_grid(tmp_path / "p.csv").shape == (25, 3)
