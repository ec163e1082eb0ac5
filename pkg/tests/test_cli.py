import json
import subprocess
import sys

import numpy as np
import pytest

from sparse_hinf.cli import (CSV_HEADER, ConfigError, load_config, main, read_sweep_csv, sweep_rows,
                             write_sweep_csv)

SMD_RUN = """
[problem]
kind = smd-structured
gamma = {gamma}

[smd]
c0 = 0.01
c1 = 0.02
c2 = 0.03

[verify]
n_samples = 20
seed = 3
"""


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _run(tmp_path, verb, text, *extra):
    cfg = _write(tmp_path, text)
    return main([verb, "--config", str(cfg), "--out", str(tmp_path / "out"), "--quiet", *extra])


def _strip_timing(doc):
    if isinstance(doc, dict):
        return {k: _strip_timing(v) for k, v in doc.items() if k != "timing"}
    if isinstance(doc, list):
        return [_strip_timing(v) for v in doc]
    return doc


def test_design_then_verify(tmp_path):
    assert _run(tmp_path, "design", SMD_RUN.format(gamma=1.0)) == 0
    doc = json.loads((tmp_path / "out" / "design.json").read_text())
    assert doc["active_sensors"] == [1, 2]
    assert len(doc["beta"]) == 6 and np.shape(doc["gain"]) == (6, 6)
    assert doc["certification"]["passed"]
    for key in ("gamma", "iterations", "timing"):
        assert key in doc
    assert _run(tmp_path, "verify", SMD_RUN.format(gamma=1.0)) == 0
    ver = json.loads((tmp_path / "out" / "verify.json").read_text())
    assert ver["certified"] and ver["n_samples"] == 20


def test_design_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    assert _run(a, "design", SMD_RUN.format(gamma=1.0)) == 0
    assert _run(b, "design", SMD_RUN.format(gamma=1.0)) == 0
    da = json.loads((a / "out" / "design.json").read_text())
    db = json.loads((b / "out" / "design.json").read_text())
    assert _strip_timing(da) == _strip_timing(db)


def test_tampered_gain_fails_verification(tmp_path):
    assert _run(tmp_path, "design", SMD_RUN.format(gamma=1.0)) == 0
    path = tmp_path / "out" / "design.json"
    doc = json.loads(path.read_text())
    doc["gain"] = (10 * np.array(doc["gain"])).tolist()
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert _run(tmp_path, "verify", SMD_RUN.format(gamma=1.0), "--design", str(bad)) == 3
    ver = json.loads((tmp_path / "out" / "verify.json").read_text())
    assert not ver["certified"] and ver["violations"]


def test_dimension_mismatch_is_usage_error(tmp_path):
    doc = {"gamma": 1.0, "gain": np.zeros((6, 5)).tolist(), "beta": [1.0] * 5}
    d = tmp_path / "d.json"
    d.write_text(json.dumps(doc))
    assert _run(tmp_path, "verify", SMD_RUN.format(gamma=1.0), "--design", str(d)) == 1


def test_zero_samples_still_reports_nominal(tmp_path):
    assert _run(tmp_path, "design", SMD_RUN.format(gamma=1.0), "--samples", "0") == 0
    assert _run(tmp_path, "verify", SMD_RUN.format(gamma=1.0), "--samples", "0") == 0
    ver = json.loads((tmp_path / "out" / "verify.json").read_text())
    assert ver["n_samples"] == 0
    assert 0 < ver["nominal_norm"] <= 1.0 * (1 + 1e-4)


def test_infeasible_gamma_exit_code(tmp_path):
    text = SMD_RUN.format(gamma=1e-9) + "\n[options]\nfrontier_bounds = 1e-9, 0.05\nfrontier_steps = 4\n"
    assert _run(tmp_path, "design", text) == 2
    doc = json.loads((tmp_path / "out" / "design.json").read_text())
    assert doc["status"] == "Infeasible"
    assert 1e-9 < doc["frontier"] <= 0.05


@pytest.mark.parametrize("text, where", [
    ("[problem]\nkind = smd-structured\ngamma = one\n", "[problem] gamma"),
    ("[problem]\nkind = polytopic\ngamma = 1\n", "[problem] kind"),
    ("[problem]\nkind = smd-structured\ngamma = -1\n", "[problem] gamma"),
    ("[problem]\nkind = smd-structured\ngamma = 1\n[verify]\nn_samples = 5\n", "[verify] seed"),
    ("[problem]\nkind = smd-structured\ngamma = 1\n[options]\nbogus = 1\n", "[options]"),
    ("[problem]\nkind = smd-structured\nsweep = gamma\ngrid =\n", "[problem] grid"),
    ("[problem]\nkind = structured\ngamma = 1\n[matrix A]\nrows = 1\ncols = 1\ndata = 1 2\n", "[matrix A]"),
    ("no sections here", ""),
])
def test_malformed_config(tmp_path, text, where):
    with pytest.raises(ConfigError) as info:
        load_config(text)
    assert where in str(info.value)
    assert _run(tmp_path, "design", text) == 1


def test_missing_config_file_and_bad_flags(tmp_path):
    assert main(["design", "--config", str(tmp_path / "nope.ini"), "--quiet"]) == 1
    assert main(["explode", "--config", "x"]) == 1
    assert _run(tmp_path, "design", SMD_RUN.format(gamma=1.0), "--samples", "-1") == 1


MATRIX_CONFIG = """
[problem]
kind = structured
gamma = 2.0

[verify]
n_samples = 10
seed = 0

[matrix A]
rows = 2
cols = 2
data = -1 1
       0 -2
[matrix B_d]
rows = 2
cols = 1
data = 1 1
[matrix C_y]
rows = 2
cols = 2
data = 1 0 0 1
[matrix D_d]
rows = 2
cols = 1
data = 0 0
[matrix C_z]
rows = 2
cols = 2
data = 1 0 0 1
[matrix M1]
rows = 2
cols = 1
data = 0 1
[matrix N1]
rows = 1
cols = 2
data = 0.1 0
[matrix M2]
rows = 2
cols = 1
data = 0 0
[matrix N2]
rows = 1
cols = 1
data = 0
"""


def test_explicit_matrix_problem(tmp_path):
    cfg = load_config(MATRIX_CONFIG)
    assert cfg.model.A.tolist() == [[-1.0, 1.0], [0.0, -2.0]]
    assert _run(tmp_path, "design", MATRIX_CONFIG) == 0
    doc = json.loads((tmp_path / "out" / "design.json").read_text())
    assert doc["certification"]["passed"]


def test_c0_sweep_csv(tmp_path):
    text = """
[problem]
kind = smd-structured
gamma = 1.0
sweep = c0
grid = 0.1, 0.0

[verify]
n_samples = 4
seed = 0
"""
    assert _run(tmp_path, "sweep", text) == 0
    csv_path = tmp_path / "out" / "sweep.csv"
    assert csv_path.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    rows = read_sweep_csv(csv_path)
    assert len(rows) == 12
    assert [r["sweep_value"] for r in rows] == [0.0] * 6 + [0.1] * 6
    assert sum(r["active"] for r in rows if r["sweep_value"] == 0.0) == 1
    meta = json.loads((tmp_path / "out" / "sweep.json").read_text())
    assert [p["sweep_value"] for p in meta["points"]] == [0.1, 0.0]


def test_csv_round_trip_with_failed_point(tmp_path):
    points = [
        {"sweep_param": "gamma", "sweep_value": 0.5, "n_sensors": 2, "feasible": True,
         "active": [True, False], "beta": [0.1 + 0.2, 1e-9], "certified": True, "worst_norm": 0.4999999},
        {"sweep_param": "gamma", "sweep_value": 1e-9, "n_sensors": 2, "feasible": False},
    ]
    rows = sweep_rows(points)
    assert [r["sweep_value"] for r in rows] == [1e-9, 1e-9, 0.5, 0.5]
    assert rows[0]["active"] == "NA"
    write_sweep_csv(tmp_path / "s.csv", rows)
    assert read_sweep_csv(tmp_path / "s.csv") == rows


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "sparse_hinf", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "design" in res.stdout
