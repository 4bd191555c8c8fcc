import csv
import io
import json
from pathlib import Path

import pytest

from dccalc.checks import Context
from dccalc.cli import main
from dccalc.errors import SchemaError
from dccalc.report import CSV_FIELDS, run_scene, to_csv, to_json
from dccalc.scene import bundled_names, bundled_path, load

DATA = Path(__file__).parent / "data"
BAD = str(DATA / "nonsymmetric-metric.json")


@pytest.mark.parametrize("name", bundled_names())
def test_bundled_scene_passes(name):
    rep = run_scene(bundled_path(name))
    failing = [(r["id"], r.get("error"), r["residual"]) for r in rep["checks"] if not r["pass"]]
    assert rep["all_pass"], failing


def test_abs1d_residuals_are_zero():
    rep = run_scene(bundled_path("abs1d"))
    assert all(r["residual"] == 0 for r in rep["checks"])


def test_polar_annulus_laplacian_forms():
    rep = run_scene(bundled_path("polar-annulus"))
    lap = [r for r in rep["checks"] if r["kind"] == "laplacian_forms"]
    assert lap and all(r["residual"] <= 1e-9 for r in lap)


def test_nonsymmetric_metric_schema_error():
    with pytest.raises(SchemaError) as exc:
        load(BAD)
    assert exc.value.path == "metric.components[0][1]"


def _doc(**over):
    doc = json.loads(Path(bundled_path("abs1d")).read_text())
    doc.update(over)
    return doc


def test_schema_errors_report_paths():
    with pytest.raises(SchemaError) as exc:
        load(_doc(schema="dccalc-scene/0"))
    assert exc.value.path == "schema"
    doc = _doc()
    doc["checks"] = doc["checks"][:1] + [{"id": "x", "kind": "weak_derivative", "f": "nope"}]
    with pytest.raises(SchemaError) as exc:
        run_scene(doc)
    assert exc.value.path == "checks[1].f"
    doc["checks"][1] = {"id": "x", "kind": "no_such_kind"}
    with pytest.raises(SchemaError):
        run_scene(doc)
    doc["checks"][1] = dict(doc["checks"][0])
    with pytest.raises(SchemaError) as exc:
        load(doc)
    assert exc.value.path == "checks[1].id"


def test_report_is_deterministic_and_ordered():
    a = to_json(run_scene(bundled_path("kink2d"), Context(seed=3)))
    b = to_json(run_scene(bundled_path("kink2d"), Context(seed=3)))
    assert a == b
    rep = json.loads(a)
    ids = [r["id"] for r in rep["checks"]]
    assert ids == sorted(ids) and rep["seed"] == 3
    for r in rep["checks"]:
        assert {"id", "identity", "residual", "tolerance", "pass"} <= set(r)


def test_csv_report():
    rep = run_scene(bundled_path("abs1d"))
    rows = list(csv.DictReader(io.StringIO(to_csv(rep))))
    assert list(rows[0]) == CSV_FIELDS
    assert len(rows) == len(rep["checks"])
    assert all(float(r["residual"]) == 0 for r in rows if r["residual"])


def test_failing_check_is_reported_not_raised():
    doc = _doc()
    doc["checks"] = [{"id": "wrong", "kind": "laplacian_forms", "f": "f", "expected": {"ac": "1"}}]
    rep = run_scene(doc)
    assert not rep["all_pass"] and rep["failed"] == 1


def test_numeric_tier_needs_adequate_order():
    rep = run_scene(bundled_path("kink2d"), Context(tier="numeric", quadrature_order=8))
    errs = [r for r in rep["checks"] if "QuadratureOrderTooLow" in r.get("error", "")]
    assert errs
    rep = run_scene(bundled_path("abs1d"), Context(tier="numeric", quadrature_order=16))
    assert rep["all_pass"]


def test_cli_run_list_and_plots(tmp_path, capsys):
    assert main(["list"]) == 0
    assert "abs1d" in capsys.readouterr().out.split()
    out = tmp_path / "r.json"
    assert main(["run", "abs1d", "--report", str(out), "--plots", str(tmp_path / "fig")]) == 0
    assert json.loads(out.read_text())["all_pass"]
    assert (tmp_path / "fig" / "abs1d-residuals.png").stat().st_size > 0
    assert list((tmp_path / "fig").glob("abs1d-taylor*.png"))
    assert main(["run", "abs1d", "--format", "csv", "--report", str(tmp_path / "r.csv")]) == 0
    assert (tmp_path / "r.csv").read_text().startswith(",".join(CSV_FIELDS))


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", BAD]) == 2
    assert "SchemaError at metric.components[0][1]" in capsys.readouterr().err
    assert main(["run", "no-such-scene"]) == 2
    doc = _doc()
    doc["checks"] = [{"id": "wrong", "kind": "laplacian_forms", "f": "f", "expected": {"ac": "1"}}]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    assert main(["run", str(p), "--report", str(tmp_path / "o.json")]) == 1
    assert "FAIL wrong" in capsys.readouterr().err


def test_cli_demo_cone(tmp_path):
    args = ["demo", "cone", "--angle", "3pi/2", "--samples", "10", "--report", str(tmp_path / "c.json"),
            "--csv", str(tmp_path / "c.csv"), "--plot", str(tmp_path / "c.png")]
    assert main(args) == 0
    rep = json.loads((tmp_path / "c.json").read_text())
    assert rep["all_pass"] and set(rep["checks"]) >= {"jump_vs_oracle", "jump_nonpositive", "angle_regression"}
    rows = list(csv.DictReader((tmp_path / "c.csv").open()))
    assert list(rows[0]) == ["arclength", "jump_density", "oracle_density"] and len(rows) == 10
    assert (tmp_path / "c.png").stat().st_size > 0
    assert main(["demo", "cone", "--annulus", "0.0001", "0.5"]) == 2
