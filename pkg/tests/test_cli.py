import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from bcn_deform import cli
from bcn_deform.blocks_local import in_chamber
from bcn_deform.errors import StepFailure

MILD = ["--x", "0.2", "--u", "-0.3", "--v", "-0.2"]


def _run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def _config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_verify_default_passes(capsys):
    code, out, _ = _run(["verify"], capsys)
    assert code == cli.EXIT_OK
    report = json.loads(out)
    assert report["passed"] and report["params"] == {"n": 2, "x": 1.0, "u": -0.3, "v": 0.5}
    assert len(report["suites"]) == 10


def test_verify_rejects_inadmissible_couplings(capsys):
    code, _, err = _run(["verify", "--u", "0.5", "--v", "-0.3"], capsys)
    assert code == cli.EXIT_CONFIG
    assert "u < v" in err
    code, _, err = _run(["verify", "--u", "-0.5", "--v", "0.5"], capsys)
    assert code == cli.EXIT_CONFIG and "v != -u" in err
    code, _, err = _run(["verify", "--x", "0"], capsys)
    assert code == cli.EXIT_CONFIG and "x != 0" in err


def test_verify_tightened_tolerances(tmp_path, capsys):
    cfg = _config(tmp_path, {"tolerances": {"scale": 0.01}, "samples": 10})
    code_t, out_t, _ = _run(["verify", "--config", cfg], capsys)
    code_d, out_d, _ = _run(["verify", "--samples", "10"], capsys)
    tight, default = json.loads(out_t), json.loads(out_d)
    assert [s["max_residual"] for s in tight["suites"]] == [s["max_residual"] for s in default["suites"]]
    assert code_d == cli.EXIT_OK
    assert code_t == (cli.EXIT_OK if tight["passed"] else cli.EXIT_SUITE)
    assert _run(["verify", "--config", cfg], capsys)[1] == out_t


def test_flags_override_config(tmp_path, capsys):
    cfg = _config(tmp_path, {"n": 3, "seed": 5})
    code, out, _ = _run(["limits", "--config", cfg, "--n", "1"], capsys)
    assert code == cli.EXIT_OK
    assert {r["limit"] for r in _rows(out)} == {"sutherland", "vdiejen", "schneider"}
    code, out, _ = _run(["simulate", "--config", cfg, "--t-max", "0"], capsys)
    assert "p_hat_3" in out.splitlines()[0]


def test_config_errors(tmp_path, capsys):
    assert _run(["verify", "--config", _config(tmp_path, {"bogus": 1})], capsys)[0] == cli.EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert _run(["verify", "--config", str(bad)], capsys)[0] == cli.EXIT_CONFIG
    assert _run(["simulate", "--k", "3"], capsys)[0] == cli.EXIT_CONFIG
    outside = _config(tmp_path, {"initial": {"p_hat": [-0.1, -0.2], "q_hat": [0, 0]}})
    assert _run(["simulate", "--config", outside], capsys)[0] == cli.EXIT_CONFIG


def test_simulate_zero_span_is_initial_state(tmp_path, capsys):
    cfg = _config(tmp_path, {"initial": {"p_hat": [-0.2, -1.0], "q_hat": [0.3, -0.4]}})
    for method in ("projection", "local"):
        code, out, _ = _run(["simulate", "--config", cfg, "--t-max", "0", "--method", method], capsys)
        rows = _rows(out)
        assert code == cli.EXIT_OK and len(rows) == 1
        assert float(rows[0]["t"]) == 0.0
        assert float(rows[0]["p_hat_1"]) == pytest.approx(-0.2, abs=1e-12)
        assert float(rows[0]["p_hat_2"]) == pytest.approx(-1.0, abs=1e-12)
    assert float(rows[0]["q_hat_1"]) == 0.3


def test_simulate_is_byte_identical(tmp_path, capsys):
    outs = []
    for i in range(2):
        path = tmp_path / f"run{i}.csv"
        assert _run(["simulate", "--method", "local", "--seed", "3", "--out", str(path)] + MILD, capsys)[0] == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    rows = _rows(outs[0].decode())
    assert len(rows) == 11 and rows[0]["method"] == "local_ode"


def test_simulate_global_columns(capsys):
    code, out, _ = _run(["simulate", "--method", "global", "--samples", "3"] + MILD, capsys)
    header = out.splitlines()[0].split(",")
    assert code == 0
    assert header == ["method", "t", "re_z_1", "re_z_2", "im_z_1", "im_z_2", "h_1", "h_2"]
    assert len(out.splitlines()) == 4


def test_simulate_both_writes_summary(tmp_path, capsys):
    path = tmp_path / "both.csv"
    code, _, _ = _run(["simulate", "--method", "both", "--out", str(path)] + MILD, capsys)
    assert code == cli.EXIT_OK
    rows = _rows(path.read_text())
    assert [r["method"] for r in rows] == ["projection"] * 11 + ["global_ode"] * 11
    summary = json.loads((tmp_path / "both.csv.summary.json").read_text())
    assert summary["max_p_hat_deviation"] < 1e-6


def test_simulate_integration_failure(monkeypatch, capsys):
    def broken(*args, **kwargs):
        raise StepFailure("step size underflow", t_last=0.25)

    monkeypatch.setattr(cli, "global_ode", broken)
    code, _, err = _run(["simulate", "--method", "global"], capsys)
    assert code == cli.EXIT_RUNTIME
    assert "last good time 0.25" in err


def test_limits_ladders(capsys):
    code, out, _ = _run(["limits"], capsys)
    rows = _rows(out)
    assert code == 0
    suth = [r for r in rows if r["limit"] == "sutherland"]
    assert [float(r["value"]) for r in suth] == [1e-2, 5e-3, 2.5e-3]
    assert all(1.6 <= float(r["ratio"]) <= 2.4 for r in suth[1:])
    for name in ("vdiejen", "schneider"):
        for point in {r["point"] for r in rows if r["limit"] == name}:
            res = [abs(float(r["residual"])) for r in rows if r["limit"] == name and r["point"] == point]
            assert len(res) == 3 and res[0] > res[1] > res[2]


def test_limits_empty_ladder(tmp_path, capsys):
    cfg = _config(tmp_path, {"ladders": {"beta": []}})
    code, _, err = _run(["limits", "--config", cfg], capsys)
    assert code == cli.EXIT_CONFIG and "empty" in err


def test_scan_marks_chamber(capsys):
    code, out, _ = _run(["scan", "--samples", "12"], capsys)
    rows = _rows(out)
    assert code == 0 and len(rows) == 144
    for r in rows:
        p = np.array([float(r["p_hat_1"]), float(r["p_hat_2"])])
        assert (r["admissible"] == "1") == in_chamber(1.0, p)
        assert (r["h_1"] != "") == (r["admissible"] == "1")


def test_scan_single_point_and_sharding(tmp_path, capsys, monkeypatch):
    cfg = _config(tmp_path, {"grid": {"p_hat": [[-0.2, -0.2, 1], [-1.0, -1.0, 1]]}})
    code, out, _ = _run(["scan", "--config", cfg], capsys)
    assert code == 0 and len(_rows(out)) == 1
    monkeypatch.setenv("BCN_DEFORM_THREADS", "1")
    one = _run(["scan", "--samples", "9"], capsys)[1]
    monkeypatch.setenv("BCN_DEFORM_THREADS", "4")
    four = _run(["scan", "--samples", "9"], capsys)[1]
    assert one == four


def test_scan_couplings_flags_rejected_rows(tmp_path, capsys):
    cfg = _config(tmp_path, {"grid": {"v": [-0.5, 0.5, 5]}, "u": -0.25})
    code, out, _ = _run(["scan", "--config", cfg], capsys)
    rows = _rows(out)
    assert code == 0
    flags = {float(r["v"]): r["accepted"] for r in rows}
    # v = -0.5 breaks u < v, v = 0.25 hits v = -u
    assert flags == {-0.5: "0", -0.25: "0", 0.0: "1", 0.25: "0", 0.5: "1"}


def test_scan_malformed_grid(tmp_path, capsys):
    for grid in ({"p_hat": [[0, 1]]}, {"w": [0, 1, 3]}, {"u": [0, 1, 0]}, []):
        cfg = _config(tmp_path, {"grid": grid})
        assert _run(["scan", "--config", cfg], capsys)[0] == cli.EXIT_CONFIG


def test_json_format(capsys):
    code, out, _ = _run(["limits", "--format", "json"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["columns"] == ["limit", "point", "value", "residual", "ratio"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "bcn_deform", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "verify" in res.stdout and "--t-max" in res.stdout
