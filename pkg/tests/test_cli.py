import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from pulse_corridor import DistinctnessError
from pulse_corridor.cli import dumps, main
from pulse_corridor.scenario import ConfigError, load_config, parse_config, run_design

ROOT = Path(__file__).resolve().parents[1]
NMB_INI = ROOT / "scenarios" / "nmb.ini"


def edit(text, **changes):
    """Replace ``key = value`` lines (first match per key) in an INI text."""
    lines = text.splitlines()
    for key, value in changes.items():
        for i, line in enumerate(lines):
            if line.split("=")[0].strip() == key:
                lines[i] = f"{key} = {value}"
                break
        else:
            raise KeyError(key)
    return "\n".join(lines) + "\n"


@pytest.fixture()
def scenario(tmp_path):
    def make(text=None, name="s.ini", **changes):
        text = NMB_INI.read_text() if text is None else text
        path = tmp_path / name
        path.write_text(edit(text, **changes) if changes else text)
        return path
    return make


def run(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def report(out_dir):
    return json.loads((Path(out_dir) / "report.json").read_text())


# -- config parsing ---------------------------------------------------------

def test_load_nmb_scenario():
    cfg = load_config(NMB_INI)
    assert cfg["structure"]["kind"] == "wiener"
    assert cfg["design"]["t_min"] == 15.0
    assert cfg["simulate"]["n_firings"] == 30
    assert cfg["numerics"]["root_grid"] == 2048 and isinstance(cfg["numerics"]["root_grid"], int)
    assert cfg.settings.root_grid == 2048


def test_json_and_ini_equivalent(tmp_path):
    ini = load_config(NMB_INI)
    path = tmp_path / "s.json"
    path.write_text(json.dumps(ini.effective()))
    assert load_config(path).effective() == ini.effective()


@pytest.mark.parametrize("raw, match", [
    ({"design": {}}, "missing block"),
    ({"corridor": {"given": "linear", "y_bar_min": 1, "y_bar_max": 2}}, "missing block"),
    ({"corridor": {"given": "sideways"}, "design": {"t_min": 1, "t_max": 2, "phi1": 1, "phi2": 2,
                                                     "f1": 1, "f2": 2}}, "given"),
    ({"bogus": {}}, "unknown blocks"),
])
def test_parse_config_errors(raw, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(raw)


def test_unknown_key_and_bad_value(scenario):
    text = NMB_INI.read_text().replace("[simulate]", "[simulate]\nspeed = 3")
    with pytest.raises(ConfigError, match="unknown keys"):
        load_config(scenario(text))
    with pytest.raises(ConfigError, match="n_firings"):
        load_config(scenario(n_firings="2.5"))
    with pytest.raises(ConfigError, match="alpha"):
        load_config(scenario(alpha="abc"))


def test_distinct_rates_error_type(scenario):
    text = NMB_INI.read_text().replace(
        "kind = nmb", "kind = chain\na1 = 0.1\na2 = 0.2\na3 = 0.2\ng1 = 0.1\ng2 = 0.05")
    with pytest.raises(DistinctnessError):
        load_config(scenario(text))


def test_measured_and_linear_corridor_give_same_design(scenario):
    text = NMB_INI.read_text().replace(
        "given = measured\ny_min = 2\ny_max = 10",
        "given = linear\ny_bar_min = 7.388943\ny_bar_max = 13.946268")
    a = run_design(load_config(NMB_INI))
    b = run_design(load_config(scenario(text)))
    assert a.cycle.T == pytest.approx(b.cycle.T, abs=1e-5)
    assert a.cycle.lam == pytest.approx(b.cycle.lam, rel=1e-6)
    np.testing.assert_allclose(a.cycle.X, b.cycle.X, rtol=1e-6)


# -- design -----------------------------------------------------------------

def test_cmd_design(tmp_path, capsys):
    code, out, _ = run(["design", "--config", NMB_INI, "--out", tmp_path], capsys)
    assert code == 0
    assert "37.3834" in out
    rep = report(tmp_path)
    d = rep["design"]
    assert d["cycle"]["T"] == pytest.approx(37.3834, abs=5e-3)
    assert d["cycle"]["lambda"] == pytest.approx(415.8412, abs=0.05)
    np.testing.assert_allclose(d["cycle"]["X"], (136.4461, 44.9637, 7.4309), atol=1e-2)
    m = d["modulation"]
    np.testing.assert_allclose([m["k1"], m["k2"], m["k3"], m["k4"]],
                               [38.3105, -0.0940, 415.5321, 0.0313], atol=1e-3)
    assert d["stability"]["spectral_radius"] == pytest.approx(0.1575, abs=1e-3)
    assert d["stability"]["stable"] is True
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["files"] == ["modulation.csv", "report.json", "sweep.csv"]
    assert "created_unix" in manifest and "created_unix" not in json.dumps(rep)
    with open(tmp_path / "sweep.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["T", "z_min", "z_max", "ratio", "objective"] and len(rows) == 257
    assert not list(tmp_path.glob(".tmp-*"))


def test_design_report_is_deterministic(tmp_path, capsys):
    run(["design", "--config", NMB_INI, "--out", tmp_path / "a"], capsys)
    run(["design", "--config", NMB_INI, "--out", tmp_path / "b"], capsys)
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()


def test_echoed_config_reproduces_report(tmp_path, capsys):
    run(["design", "--config", NMB_INI, "--out", tmp_path / "a"], capsys)
    first = report(tmp_path / "a")
    echo = tmp_path / "echo.json"
    echo.write_text(json.dumps(first["config"]))
    run(["design", "--config", echo, "--out", tmp_path / "b"], capsys)
    assert report(tmp_path / "b") == first


def test_report_floats_have_17_digits():
    text = dumps({"x": 0.1, "y": 200.0, "z": [1, None, True]})
    assert '"x": 0.10000000000000001' in text
    assert '"y": 200.0' in text
    assert json.loads(text) == {"x": 0.1, "y": 200.0, "z": [1, None, True]}


def test_missing_corridor_is_schema_error(scenario, tmp_path, capsys):
    text = NMB_INI.read_text().replace("[corridor]\ngiven = measured\ny_min = 2\ny_max = 10\n", "")
    code, _, err = run(["design", "--config", scenario(text), "--out", tmp_path / "o"], capsys)
    assert code == 2
    assert "corridor" in err


def test_missing_file_is_schema_error(tmp_path, capsys):
    code, _, _ = run(["design", "--config", tmp_path / "nope.ini", "--out", tmp_path], capsys)
    assert code == 2


def test_unreachable_corridor_exit_code(scenario, tmp_path, capsys):
    code, _, err = run(["design", "--config", scenario(y_max="90"), "--out", tmp_path / "o"], capsys)
    assert code == 3
    assert "UnreachableCorridorError" in err


def test_no_stabilizing_slopes_exit_code(scenario, tmp_path, capsys):
    text = NMB_INI.read_text().replace(
        "k2 = -0.094\nk4 = 0.0313", "slopes = search\nk2_range = -3, -3\nk4_range = 0, 0")
    code, _, err = run(["design", "--config", scenario(text), "--out", tmp_path / "o"], capsys)
    assert code == 4
    assert "NoStabilizingSlopesError" in err


def test_slope_search_mode(scenario, tmp_path, capsys):
    text = NMB_INI.read_text().replace(
        "k2 = -0.094\nk4 = 0.0313", "slopes = search\nk2_range = -0.5, 0\nk4_range = 0, 0.1\nslope_grid = 9")
    code, _, _ = run(["design", "--config", scenario(text), "--out", tmp_path], capsys)
    assert code == 0
    assert report(tmp_path)["design"]["stability"]["spectral_radius"] <= 0.1575


def test_saturated_design_is_validation_error(scenario, tmp_path, capsys):
    code, _, err = run(["design", "--config", scenario(f1="500"), "--out", tmp_path], capsys)
    assert code == 2
    assert "SaturationError" in err


# -- simulate ---------------------------------------------------------------

def test_cmd_simulate(tmp_path, capsys):
    code, out, _ = run(["simulate", "--config", NMB_INI, "--out", tmp_path], capsys)
    assert code == 0
    sim = report(tmp_path)["simulation"]
    assert sim["converged"] is True
    c = sim["corridor"]
    assert c["y_bar_min"] == pytest.approx(7.3889, abs=1e-3)
    assert c["y_bar_max"] == pytest.approx(13.9463, abs=1e-3)
    assert c["y_min"] == pytest.approx(2.0, abs=1e-2) and c["y_max"] == pytest.approx(10.0, abs=1e-2)
    assert c["violated"] is False
    assert len(sim["firing_outputs"]) == 30
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["files"] == ["events.csv", "report.json", "trajectory.csv"]


def test_simulate_from_design_artifact(tmp_path, capsys):
    run(["design", "--config", NMB_INI, "--out", tmp_path / "d"], capsys)
    run(["simulate", "--config", NMB_INI, "--out", tmp_path / "a"], capsys)
    code, _, _ = run(["simulate", "--config", NMB_INI, "--out", tmp_path / "b",
                      "--design", tmp_path / "d" / "report.json"], capsys)
    assert code == 0
    assert (tmp_path / "a" / "events.csv").read_bytes() == (tmp_path / "b" / "events.csv").read_bytes()


def test_simulate_from_fixed_point_has_no_transient(scenario, tmp_path, capsys):
    run(["simulate", "--config", scenario(x0="fixed_point", n_firings="20"), "--out", tmp_path], capsys)
    sim = report(tmp_path)["simulation"]
    assert sim["n_star"] == 0
    np.testing.assert_allclose(sim["intervals"], sim["intervals"][0], rtol=1e-9)
    np.testing.assert_allclose(sim["doses"], sim["doses"][0], rtol=1e-9)


def test_open_loop_matches_closed_loop_from_fixed_point(scenario, tmp_path, capsys):
    closed = scenario(x0="fixed_point", name="c.ini")
    text = NMB_INI.read_text().replace("[simulate]", "[simulate]\nmode = open")
    opened = scenario(edit(text, x0="fixed_point"), name="o.ini")
    run(["simulate", "--config", closed, "--out", tmp_path / "c"], capsys)
    run(["simulate", "--config", opened, "--out", tmp_path / "o"], capsys)
    a, b = report(tmp_path / "c")["simulation"], report(tmp_path / "o")["simulation"]
    np.testing.assert_allclose(a["intervals"], b["intervals"], rtol=1e-9)
    np.testing.assert_allclose(a["doses"], b["doses"], rtol=1e-9)
    np.testing.assert_allclose(a["firing_outputs"], b["firing_outputs"], rtol=1e-9)


def test_simulation_abort_exit_code(tmp_path, capsys):
    text = """
[structure]
kind = hammerstein
nonlinearity = table
table_x = 0, 10
table_y = 0.001, 100

[corridor]
given = linear
y_bar_min = 7.3889
y_bar_max = 13.9463

[design]
t_min = 15
t_max = 45
k2 = 0
k4 = 0
phi1 = 5
phi2 = 45
f1 = 200
f2 = 5000
"""
    path = tmp_path / "h.ini"
    path.write_text(text)
    code, _, err = run(["simulate", "--config", path, "--out", tmp_path / "o"], capsys)
    assert code == 5
    assert "SimulationAbort" in err


def test_hammerstein_scenario(tmp_path, capsys):
    text = NMB_INI.read_text().replace("kind = wiener\nnonlinearity = hill", "kind = hammerstein\nnonlinearity = power\nexponent = 2")
    text = text.replace("given = measured\ny_min = 2\ny_max = 10", "given = linear\ny_bar_min = 7.3889\ny_bar_max = 13.9463")
    text = text.replace("k2 = -0.094\nk4 = 0.0313", "k2 = 0.5\nk4 = -2")
    path = tmp_path / "h.ini"
    path.write_text(text)
    code, _, _ = run(["simulate", "--config", path, "--out", tmp_path / "o"], capsys)
    assert code == 0
    with open(tmp_path / "o" / "events.csv") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        assert abs(float(r["lambda_n"]) ** 2 - float(r["target_jump"])) <= 1e-8


# -- analyze and verify -----------------------------------------------------

def test_cmd_analyze(tmp_path, capsys):
    path = tmp_path / "a.ini"
    path.write_text(NMB_INI.read_text() + "\n[analyze]\nt = 37.3834\nlambda = 415.8412\n")
    code, out, _ = run(["analyze", "--config", path, "--out", tmp_path / "o", "--format", "json"], capsys)
    assert code == 0
    a = json.loads(out)["analysis"]
    assert a["y_bar_min"] == pytest.approx(7.3889, abs=1e-3)
    assert a["y_bar_max"] == pytest.approx(13.9463, abs=1e-3)
    assert a["y_min"] == pytest.approx(2.0, abs=1e-2)
    np.testing.assert_allclose(a["X"], (136.4461, 44.9637, 7.4309), atol=1e-2)


def test_analyze_needs_parameters(tmp_path, capsys):
    code, _, err = run(["analyze", "--config", NMB_INI, "--out", tmp_path], capsys)
    assert code == 2


def test_cmd_verify_passes(capsys):
    code, out, _ = run(["verify", "--config", NMB_INI], capsys)
    assert code == 0
    for name in ("fixed_point_roundtrip", "extrema_vs_sampling", "wiener_equivalence",
                 "output_continuity", "zeno_free", "state_positivity"):
        assert f"PASS  {name}" in out
    assert "FAIL" not in out


def test_verify_reports_distinctness(scenario, capsys):
    text = NMB_INI.read_text().replace(
        "kind = nmb", "kind = chain\na1 = 0.1\na2 = 0.2\na3 = 0.2\ng1 = 0.1\ng2 = 0.05")
    code, out, _ = run(["verify", "--config", scenario(text)], capsys)
    assert code == 2
    assert "FAIL" in out and "DistinctnessError" in out


def test_verify_reports_unreachable(scenario, capsys):
    code, out, _ = run(["verify", "--config", scenario(y_max="90"), "--format", "json"], capsys)
    assert code == 3
    rep = json.loads(out)
    assert rep["passed"] is False
    assert "UnreachableCorridorError" in rep["checks"][0]["detail"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pulse_corridor", "design", "--config", str(NMB_INI),
                           "--out", str(tmp_path), "--format", "json", "--seed", "7"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["command"] == "design"
