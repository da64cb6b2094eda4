import io
import json
import pathlib
from fractions import Fraction

import pandas as pd
import pytest

from toricding import solver
from toricding.catalog import confpath
from toricding.cli import ExitCode, run_cli

F1 = {"name": "F1", "dim": 2, "vertices": [[-1, -1], [0, -1], [2, 1], [-1, 1]]}
NOT_REFLEXIVE = {"name": "big", "dim": 2, "vertices": [[-1, -1], [3, -1], [-1, 3]]}


@pytest.fixture
def polytope_dir(tmp_path: pathlib.Path) -> pathlib.Path:
    directory = tmp_path / "polytopes"
    directory.mkdir()
    (directory / "f1.json").write_text(json.dumps(F1))
    (directory / "p1xp1.json").write_text(
        json.dumps({"name": "P1xP1", "dim": 2, "vertices": [[1, 1], [1, -1], [-1, 1], [-1, -1]]})
    )
    return directory


def test_alpha_json(capsys: pytest.CaptureFixture[str]):
    assert run_cli(["alpha", "P2", "--format", "json"]) == ExitCode.OK
    assert capsys.readouterr().out.startswith('{"alpha":"0/1","stable":true')


def test_alpha_text(capsys: pytest.CaptureFixture[str]):
    assert run_cli(["alpha", "F1"]) == ExitCode.OK
    out = capsys.readouterr().out
    assert "alpha: 5/11" in out
    assert "lambda: 3/22" in out


def test_catalog_list(capsys: pytest.CaptureFixture[str]):
    assert run_cli(["catalog", "list", "--format", "json"]) == ExitCode.OK
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 9
    assert rows[3]["key"] == "F1"


def test_info_round_trip(tmp_path: pathlib.Path, capsys: pytest.CaptureFixture[str]):
    assert run_cli(["info", "F1", "--format", "json"]) == ExitCode.OK
    info = json.loads(capsys.readouterr().out)
    assert info["volume"] == "4/1"
    path = tmp_path / "f1.json"
    path.write_text(json.dumps({key: info[key] for key in ("name", "dim", "vertices")}))
    assert run_cli(["info", str(path), "--format", "json"]) == ExitCode.OK
    assert json.loads(capsys.readouterr().out) == info


def test_usage_errors(capsys: pytest.CaptureFixture[str]):
    assert run_cli([]) == ExitCode.USAGE
    assert run_cli(["alpha", "P2", "--format", "yaml"]) == ExitCode.USAGE
    assert run_cli(["alpha", "NoSuchPolytope"]) == ExitCode.USAGE
    assert "usage error" in capsys.readouterr().err


def test_help_exits_cleanly(capsys: pytest.CaptureFixture[str]):
    assert run_cli(["--help"]) == ExitCode.OK
    assert "toricding" in capsys.readouterr().out


def test_invalid_polytope(tmp_path: pathlib.Path, capsys: pytest.CaptureFixture[str]):
    path = tmp_path / "big.json"
    path.write_text(json.dumps(NOT_REFLEXIVE))
    assert run_cli(["alpha", str(path)]) == ExitCode.INVALID_POLYTOPE
    assert "invalid polytope" in capsys.readouterr().err
    path.write_text('{"name": "broken"}')
    assert run_cli(["info", str(path)]) == ExitCode.INVALID_POLYTOPE


def test_solve_writes_outputs(output_dir: pathlib.Path, capsys: pytest.CaptureFixture[str]):
    code = run_cli(["solve", "P1", "--refine", "1", "--format", "json", "--out", str(output_dir), "--plot", "svg"])
    assert code == ExitCode.OK
    document = json.loads(capsys.readouterr().out)
    assert document["converged"]
    assert document["sample"] == [["-1/1"], ["0/1"], ["1/1"]]
    assert json.loads((output_dir / "P1-solver.json").read_text()) == document
    convergence = pd.read_csv(output_dir / "P1-convergence.csv")
    assert convergence["grad_norm"].iloc[-1] <= 1e-8
    metric = pd.read_csv(output_dir / "P1-metric.csv")
    assert len(metric) == 11
    assert metric["hess_0_0"].iloc[5] == pytest.approx(0.5, rel=1e-6)
    assert (output_dir / "P1-convergence.svg").read_text().lstrip().startswith("<?xml")


def test_solve_not_converged(output_dir: pathlib.Path):
    code = run_cli(["solve", "P1", "--refine", "2", "--max-iter", "1", "--out", str(output_dir)])
    assert code == ExitCode.NOT_CONVERGED
    assert (output_dir / "P1-solver.json").exists()


def test_solve_refused(output_dir: pathlib.Path, monkeypatch: pytest.MonkeyPatch, capsys: pytest.CaptureFixture[str]):
    monkeypatch.setattr(solver, "alpha_invariant", lambda *_: Fraction(1))
    assert run_cli(["solve", "F1", "--out", str(output_dir)]) == ExitCode.REFUSED
    assert "alpha = 1" in capsys.readouterr().err
    assert not output_dir.exists()


def test_stability_with_plot(output_dir: pathlib.Path, capsys: pytest.CaptureFixture[str]):
    code = run_cli(["stability", "F1", "--steps", "5", "--format", "csv", "--plot", "svg", "--out", str(output_dir)])
    assert code == ExitCode.OK
    df = pd.read_csv(io.StringIO(capsys.readouterr().out))
    assert len(df) == 20
    assert (output_dir / "F1-polytope.svg").exists()


def test_probe(capsys: pytest.CaptureFixture[str]):
    assert run_cli(["probe", "P1", "--pairs", "5", "--format", "json"]) == ExitCode.OK
    document = json.loads(capsys.readouterr().out)
    assert document["prekopa"]["passed"]
    assert document["min_margin"] >= -1e-8


def test_scan(polytope_dir: pathlib.Path, output_dir: pathlib.Path, capsys: pytest.CaptureFixture[str]):
    assert run_cli(["scan", str(polytope_dir), "--out", str(output_dir)]) == ExitCode.OK
    summary = pd.read_csv(output_dir / "scan-summary.csv")
    assert list(summary["file"]) == ["f1.json", "p1xp1.json"]
    assert list(summary["alpha"]) == ["5/11", "0/1"]
    capsys.readouterr()

    # The per-file documents are byte-identical to the alpha command
    assert run_cli(["alpha", str(polytope_dir / "f1.json"), "--format", "json"]) == ExitCode.OK
    assert (output_dir / "f1.alpha.json").read_text() == capsys.readouterr().out


def test_scan_of_builtin_catalog(tmp_path: pathlib.Path, output_dir: pathlib.Path, capsys: pytest.CaptureFixture[str]):
    directory = tmp_path / "catalog"
    directory.mkdir()
    entries = json.loads((confpath() / "catalog.json").read_text())
    for entry in entries:
        document = {key: entry[key] for key in ("name", "dim", "vertices")}
        (directory / f"{entry['key']}.json").write_text(json.dumps(document))
    assert run_cli(["scan", str(directory), "--out", str(output_dir)]) == ExitCode.OK
    capsys.readouterr()

    summary = pd.read_csv(output_dir / "scan-summary.csv")
    assert len(summary) == len(entries)
    assert summary["error"].isna().all()
    assert summary["dim"].dtype == "int64"
    for entry in entries:
        assert run_cli(["alpha", entry["key"], "--format", "json"]) == ExitCode.OK
        assert (output_dir / f"{entry['key']}.alpha.json").read_text() == capsys.readouterr().out


def test_scan_is_reproducible(polytope_dir: pathlib.Path, tmp_path: pathlib.Path):
    first, second = tmp_path / "first", tmp_path / "second"
    assert run_cli(["scan", str(polytope_dir), "--out", str(first)]) == ExitCode.OK
    assert run_cli(["scan", str(polytope_dir), "--out", str(second), "--workers", "2"]) == ExitCode.OK
    for name in ("scan-summary.csv", "f1.alpha.json", "p1xp1.alpha.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_scan_reports_invalid_files(polytope_dir: pathlib.Path, output_dir: pathlib.Path):
    (polytope_dir / "big.json").write_text(json.dumps(NOT_REFLEXIVE))
    assert run_cli(["scan", str(polytope_dir), "--out", str(output_dir)]) == ExitCode.INVALID_POLYTOPE
    summary = pd.read_csv(output_dir / "scan-summary.csv")
    assert summary.loc[summary["file"] == "big.json", "error"].str.startswith("NotReflexive").all()


def test_scan_needs_a_directory(tmp_path: pathlib.Path):
    assert run_cli(["scan", str(tmp_path / "missing")]) == ExitCode.USAGE
