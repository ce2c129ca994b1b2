import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from mmflow import cli
from mmflow.flow import load_snapshots

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    for f in CONFIGS.glob("*.json"):
        shutil.copy(f, tmp_path / f.name)
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2))
    return str(path)


TWO_POINT_W2 = {
    "problem": "cvp",
    "space": {"coords": [[0.0], [1.0]]},
    "kernel": {"matrix": [[0, 0], [0, 2]]},
    "initial": {"uniform": True},
    "flow": {"h": 1.0, "xi": 1.0, "metric": {"kind": "wasserstein", "p": 2}},
    "certify": True,
}


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_validate(workdir, name, capsys):
    assert cli.main(["validate", name]) == cli.EXIT_OK
    assert capsys.readouterr().out.strip() == "ok"


def test_run_writes_outputs_and_is_deterministic(workdir):
    assert cli.main(["run", "two_point.json"]) == cli.EXIT_OK
    first = (workdir / "out" / "two_point_trace.csv").read_text()
    report = json.loads((workdir / "out" / "two_point_report.json").read_text())
    assert report["certification"]["certified"]
    assert cli.main(["run", "two_point.json"]) == cli.EXIT_OK
    assert (workdir / "out" / "two_point_trace.csv").read_text() == first


def test_snapshots_roundtrip(workdir):
    assert cli.main(["run", "two_point.json"]) == cli.EXIT_OK
    snaps = load_snapshots((workdir / "out" / "two_point_snapshots.json").read_text())
    report = json.loads((workdir / "out" / "two_point_report.json").read_text())
    np.testing.assert_array_equal(snaps[-1].weights, report["final_weights"])


def test_uncertified_exit_code(workdir, capsys):
    path = write(workdir / "w2.json", TWO_POINT_W2)
    assert cli.main(["run", path]) == cli.EXIT_UNCERTIFIED
    report = json.loads(capsys.readouterr().out)
    assert report["el_approx_residual"] == pytest.approx(0.5 * np.sqrt(0.5) - 0.5)


def test_asymmetric_kernel_is_rejected(workdir, capsys):
    bad = dict(TWO_POINT_W2, kernel={"matrix": [[0, 1], [0, 2]]})
    path = write(workdir / "bad.json", bad)
    assert cli.main(["validate", "--json", path]) == cli.EXIT_INVALID
    captured = capsys.readouterr()
    assert "(A1)" in captured.err
    diag = json.loads(captured.out)
    assert diag["error"] == "DomainError"


def test_parse_error_reports_line(workdir, capsys):
    Path("broken.json").write_text('{\n  "problem": "cvp",\n  "flow": {"h": 1.0,,}\n}\n')
    assert cli.main(["validate", "--json", "broken.json"]) == cli.EXIT_INVALID
    diag = json.loads(capsys.readouterr().out)
    assert diag["error"] == "ParseError"
    assert diag["line"] == 3


def test_schema_error(workdir, capsys):
    bad = dict(TWO_POINT_W2, flow={"h": -1.0})
    path = write(workdir / "schema.json", bad)
    assert cli.main(["validate", "--json", path]) == cli.EXIT_INVALID
    diag = json.loads(capsys.readouterr().out)
    assert diag["error"] in ("SchemaError", "DomainError")


def test_runtime_failure_exit_code(workdir, monkeypatch, capsys):
    def boom(*a, **k):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(cli, "run_problem", boom)
    assert cli.main(["run", "two_point.json"]) == cli.EXIT_RUNTIME
    err = json.loads(capsys.readouterr().out)
    assert err["error"] == "RuntimeError"


def test_compare_h(workdir):
    assert cli.main(["compare-h", "compare_h.json"]) == cli.EXIT_OK
    report = json.loads((workdir / "out" / "compare_h_report.json").read_text())
    assert len(report["compare_h"]["schedule"]) >= 2
    assert cli.main(["compare-h", "two_point.json"]) == cli.EXIT_INVALID


def test_demo_spiral(workdir, capsys):
    assert cli.main(["demo-spiral", "--xi", "0.05", "--t-end", "3000", "--out", "sp.csv"]) == cli.EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert rep["halted"]
    assert Path("sp.csv").read_text().startswith("t,r,phi_unwrapped")


def test_dirac_config_reports_dirac_trajectory(workdir):
    assert cli.main(["run", "dirac_wasserstein.json"]) == cli.EXIT_OK
    report = json.loads((workdir / "out" / "dirac_report.json").read_text())
    assert report["dirac_trajectory"] is True


def test_spiral_config_reports_stop_point(workdir):
    assert cli.main(["run", "spiral.json"]) == cli.EXIT_OK
    report = json.loads((workdir / "out" / "spiral_report.json").read_text())
    assert report["halted"]
    assert report["stop"]["grad_norm"] <= 0.05 + 1e-12


def test_compare_h_reports_distances(workdir):
    assert cli.main(["compare-h", "compare_h.json"]) == cli.EXIT_OK
    report = json.loads((workdir / "out" / "compare_h_report.json").read_text())["compare_h"]
    assert report["schedule"] == [0.1, 0.05, 0.025]
    D = np.array(report["distances"])
    assert D.shape == (3, 3) and np.allclose(D, D.T)
    c = report["consecutive"]
    assert report["monotone_shrink"] == (c[1] <= c[0] + 1e-12)
