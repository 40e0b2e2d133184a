import json
import math
import shutil
import subprocess

import numpy as np
import pytest

from aggrekin.cli import main
from aggrekin.model import equilibrium

from conftest import data_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


def test_classify(capsys):
    d = run_json(capsys, "classify", "-p", data_path("fig3.json"))
    assert d["regime"] == "StableAggregate"
    assert d["alpha_bar"] == pytest.approx(0.636610, abs=1e-6)
    assert run_json(capsys, "classify", "-p", data_path("fig5.json"))["regime"] == "Dissolution"
    assert run_json(capsys, "classify", "-p", data_path("fig4.json"))["regime"] == "PolyGrowth"


def test_validation_errors(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    code, _, err = run(capsys, "classify", "-p", bad)
    assert code == 2 and "malformed JSON" in err
    bad.write_text(json.dumps({"n": 5, "kappa1": 1, "kappa2": -1, "kappa3": 1, "kappa_m1": 1, "kappa_m": 1}))
    code, _, err = run(capsys, "classify", "-p", bad)
    assert code == 2 and "kappa2" in err
    code, _, _ = run(capsys, "classify", "-p", tmp_path / "missing.json")
    assert code == 2
    code, _, _ = run(capsys, "simulate", "-p", data_path("fig3.json"), "--t-end", "1", "--init", "1,2")
    assert code == 2
    code, _, _ = run(capsys, "frobnicate")
    assert code == 2


def test_equilibrium(capsys, fig3):
    d = run_json(capsys, "equilibrium", "-p", data_path("fig3.json"))
    assert d["p_bar"] == equilibrium(fig3).p_bar
    code, _, _ = run(capsys, "equilibrium", "-p", data_path("fig5.json"))
    assert code == 3


def test_simulate_stable(capsys, tmp_path, fig3):
    out = tmp_path / "traj.csv"
    d = run_json(capsys, "simulate", "-p", data_path("fig3.json"), "--init", "2,4,3",
                 "--t-end", "200", "--out", out)
    target = equilibrium(fig3).state.as_array()
    final = np.array([d["final"][k] for k in "pqr"])
    assert np.linalg.norm(final - target) / np.linalg.norm(target) < 1e-6
    lines = out.read_text().splitlines()
    assert lines[0] == "t,p,q,r"
    assert len(lines) == d["nsteps"] + 2


def test_simulate_is_byte_identical(capsys, tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for path in paths:
        run_json(capsys, "simulate", "-p", data_path("fig4.json"), "--t-end", "50", "--out", path)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_simulate_domain_errors(capsys):
    code, _, err = run(capsys, "simulate", "-p", data_path("fig3.json"), "--system", "blowup",
                       "--init", "0,0,0", "--t-end", "1")
    assert code == 3 and "q > 0" in err
    code, _, _ = run(capsys, "simulate", "-p", data_path("fig3.json"), "--init", "0,1,2", "--t-end", "1")
    assert code == 3


def test_simulate_numerical_error(capsys):
    code, _, err = run(capsys, "simulate", "-p", data_path("fig3.json"), "--t-end", "100",
                       "--max-steps", "3")
    assert code == 4 and "max_steps" in err


def test_simulate_blowup_matches_original(capsys):
    a = run_json(capsys, "simulate", "-p", data_path("fig3.json"), "--t-end", "20")
    b = run_json(capsys, "simulate", "-p", data_path("fig3.json"), "--t-end", "20", "--system", "blowup")
    assert set(b["final"]) == {"p1", "q1", "r1"} and b["T"] > 0
    for k in "pqr":
        assert b["final_original"][k] == pytest.approx(a["final"][k], rel=1e-7)


def test_simulate_compact_late_time(capsys):
    d = run_json(capsys, "simulate", "-p", data_path("fig4.json"), "--system", "compact",
                 "--t-end", "1e4", "--samples", "50", "--log")
    assert abs(d["t_times_w"] * 0.134742 - 1) < 0.02


@pytest.mark.parametrize("fmt", ["json", "svg"])
def test_simulate_other_formats(capsys, tmp_path, fmt):
    out = tmp_path / f"traj.{fmt}"
    d = run_json(capsys, "simulate", "-p", data_path("fig3.json"), "--t-end", "10", "--samples", "20",
                 "--out", out)
    assert d["format"] == fmt
    text = out.read_text()
    if fmt == "json":
        payload = json.loads(text)
        assert payload["columns"] == ["t", "p", "q", "r"] and len(payload["rows"]) == 20
    else:
        assert text.startswith("<svg") and text.count("<polyline") == 3


def test_sweep(capsys, tmp_path):
    d = run_json(capsys, "sweep", "--config", data_path("fig7.json"), "--out-dir", tmp_path)
    assert d["resolution"] == 200 and d["meta"]["n_assumed"] is False
    assert (tmp_path / "sweep_grid.csv").read_text().startswith("k1,k2,alpha_bar\n")
    assert (tmp_path / "curve_alpha1.csv").exists() and (tmp_path / "sweep.svg").exists()
    d = run_json(capsys, "sweep", "--resolution", "20")
    assert d["meta"]["n_assumed"] is True


def test_constants(capsys):
    d = run_json(capsys, "constants", "-p", data_path("fig4.json"), "--epsilon", "0.01")
    assert d["v_star"] == pytest.approx(-math.sqrt(156.8 / 765), abs=1e-12)
    assert d["B_variant"] == "product" and d["B_consistent"] is True and d["epsilon"] == 0.01
    code, _, _ = run(capsys, "constants", "-p", data_path("fig3.json"), "--epsilon", "0.01")
    assert code == 3


def test_verify_subcommands(capsys):
    d = run_json(capsys, "verify", "theorem2", "-p", data_path("fig4.json"), "--eps", "0.02", "0.01")
    assert len(d["ratios"]) == 1
    d = run_json(capsys, "verify", "corollary1", "-p", data_path("fig4.json"))
    assert d["tw_rel_dev"] < 0.02
    d = run_json(capsys, "verify", "transforms", "-p", data_path("fig3.json"), "--count", "2")
    assert d["blowup"]["max_rel_deviation"] < 1e-6 and d["compact"]["max_rel_deviation"] < 1e-6
    d = run_json(capsys, "verify", "growth", "-p", data_path("fig4.json"))
    assert d["kind"] == "Growing"
    assert d["fit"]["coeff_q"] == pytest.approx(d["predicted"]["coeff_q"], rel=0.05)
    code, _, _ = run(capsys, "verify", "growth", "-p", data_path("fig5.json"), "--t-end", "1")
    assert code == 4


@pytest.mark.skipif(shutil.which("aggrekin") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["aggrekin", "classify", "-p", str(data_path("fig4.json"))],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["regime"] == "PolyGrowth"
