import csv
import json

import numpy as np
import pytest

from cutbernoulli.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, OUTPUT_ENV, main
from cutbernoulli.config import RunConfig, build_config, compile_expression, load_config, parse_assignments
from cutbernoulli.errors import ConfigError
from cutbernoulli.vtkio import FIELD_NAMES, Snapshot, parse_snapshot, read_snapshot


def test_config_round_trip():
    cfg = RunConfig(mode="solve", n=24, ns=(8, 16), offsets=(0.0, 0.5), f="sin(x)*y")
    back = build_config(None, parse_assignments(cfg.to_text()))
    assert back == cfg


def test_config_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nn = 32\nbogus = 1\n")
    with pytest.raises(ConfigError, match="line 3"):
        load_config(path)
    path.write_text("n = 32\nalpha = lots\n")
    with pytest.raises(ConfigError, match="line 2"):
        load_config(path)


@pytest.mark.parametrize("kw", [dict(alpha=1.5), dict(n=1), dict(problem="MP9"), dict(geometry="x"),
                                dict(problem="custom")])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw)


def test_expressions_are_restricted():
    f = compile_expression("sin(pi*x) + y**2")
    assert f(np.array([[0.5, 2.0]]))[0] == pytest.approx(5.0)
    with pytest.raises(ConfigError):
        compile_expression("__import__('os')")
    with pytest.raises(ConfigError):
        compile_expression("x +")


def test_vtk_round_trip(rng):
    pts = rng.random((5, 2))
    snap = Snapshot(pts, np.array([[0, 1, 2], [2, 3, 4]]), {"phi": rng.standard_normal(5)}, "t")
    text = snap.to_text()
    back = parse_snapshot(text)
    assert np.array_equal(back.points, pts)
    assert back.to_text() == text


@pytest.fixture(scope="module")
def solve_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve")
    assert main(["solve", "--problem", "MP1", "--n", "16", "--output", str(out)]) == EXIT_OK
    return out


def test_solve_artifacts(solve_dir):
    for name in ("solution.vtk", "errors.csv", "summary.json", "config.txt"):
        assert (solve_dir / name).exists()
    snap = read_snapshot(solve_dir / "solution.vtk")
    assert tuple(snap.fields) == FIELD_NAMES
    assert snap.to_text() == (solve_dir / "solution.vtk").read_text()
    rows = list(csv.DictReader((solve_dir / "errors.csv").open()))
    assert [r["p"] for r in rows] == ["2", "4"]
    assert float(rows[0]["Lp"]) < 1e-2
    summary = json.loads((solve_dir / "summary.json").read_text())
    assert summary["geometry"] == "optimal" and summary["residual"] < 5e-2


def test_outputs_are_byte_identical(solve_dir, tmp_path):
    assert main(["solve", "--problem", "MP1", "--n", "16", "--output", str(tmp_path)]) == EXIT_OK
    for name in ("solution.vtk", "errors.csv", "summary.json"):
        assert (tmp_path / name).read_bytes() == (solve_dir / name).read_bytes()


def test_env_output_and_flag_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["solve", "--n", "8"]) == EXIT_OK
    assert (tmp_path / "env" / "solution.vtk").exists()
    assert main(["solve", "--n", "8", "--output", str(tmp_path / "flag")]) == EXIT_OK
    assert (tmp_path / "flag" / "solution.vtk").exists()


def test_config_file_and_set(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n = 12\nalpha = 0.25\n")
    assert main(["solve", "--config", str(cfg), "--set", "alpha=0.3", "--dump-config"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "n = 12" in text and "alpha = 0.3" in text and "mode = solve" in text


def test_usage_errors(tmp_path):
    assert main(["solve", "--set", "bogus=1", "--output", str(tmp_path)]) == EXIT_USAGE
    assert main(["solve", "--set", "n", "--output", str(tmp_path)]) == EXIT_USAGE
    assert main(["solve", "--config", str(tmp_path / "missing.cfg")]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["no-such-mode"])
    assert exc.value.code == 2


def test_custom_problem(tmp_path):
    args = ["solve", "--problem", "custom", "--n", "16", "--output", str(tmp_path),
            "--set", "initial=hypot(x-0.5, y-0.5) - 0.3", "--set", "f=1", "--set", "g_D=x", "--set", "g_N=-1"]
    assert main(args) == EXIT_OK
    snap = read_snapshot(tmp_path / "solution.vtk")
    assert np.any(snap.fields["u"])


def test_numeric_failure_exit(tmp_path, capsys):
    args = ["solve", "--problem", "custom", "--n", "8", "--output", str(tmp_path), "--set", "initial=1 + 0*x"]
    assert main(args) == EXIT_NUMERIC
    assert "EmptyDomain" in capsys.readouterr().err


def test_optimize_snapshots(tmp_path):
    code = main(["optimize", "--problem", "MP1", "--n", "16", "--tol", "1e-2", "--max-iter", "4",
                 "--output", str(tmp_path)])
    assert code in (0, 1)
    log = list(csv.DictReader((tmp_path / "log.csv").open()))
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert len(log) == summary["iterations"] + 1
    for row in log:
        assert (tmp_path / f"snapshot_{int(row['iteration']):04d}.vtk").exists()
    assert (tmp_path / "final.vtk").exists()


def test_study_modes(tmp_path):
    out = tmp_path / "p"
    assert main(["converge-primal", "--output", str(out), "--set", "ns=8,16", "--set", "n_ref=32"]) == EXIT_OK
    assert (out / "primal.csv").exists() and (out / "dual.csv").exists()
    out = tmp_path / "c"
    assert main(["condition-sweep", "--n", "16", "--output", str(out)]) == EXIT_OK
    rows = list(csv.DictReader((out / "conditioning.csv").open()))
    assert len(rows) == 8
    out = tmp_path / "v"
    assert main(["converge-velocity", "--output", str(out), "--set", "ns=8,16", "--set", "n_ref=32"]) == EXIT_OK
    assert (out / "velocity.csv").exists()
