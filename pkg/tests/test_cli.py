import json

import pytest

from growthfrag.cli import main
from growthfrag.config import ConfigError, parse_text

BASE = """
model.tau = 1
model.nu = 1
model.beta = 1
model.gamma = 1
model.mu = 1
"""

WQ = BASE + """
f.family = shifted-gaussian-quartic
g.family = linear
g.c = 0.9
closure.p = 2
closure.q = 5
ode.system = WQ
ode.y0 = 1.2, 1.0
time.t_end = 20
time.dt = 0.01
"""


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_parse_text_rejects_unknown_and_duplicate_keys():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_text("model.tau = 1\nmodel.colour = red\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_text("model.tau = 1\nmodel.tau = 2\n")
    with pytest.raises(ConfigError, match="bad value"):
        parse_text("grid.n = many\n")
    cfg = parse_text("ode.y0 = 1, 2.5  # comment\npde.manifold = yes\n")
    assert cfg["ode.y0"] == (1.0, 2.5) and cfg["pde.manifold"] is True


def test_eigen_writes_outputs_and_manifest(tmp_path):
    out = tmp_path / "eig"
    code = main(["eigen", "--config", _write(tmp_path, BASE), "--out", str(out), "--grid-n", "300", "--quiet"])
    assert code == 0
    m = _manifest(out)
    assert m["exit_code"] == 0 and m["command"] == "eigen"
    assert set(m["outputs"]) == {"eigenpair.csv", "eigen_summary.csv"}
    assert m["config"]["model.tau"] == 1.0 and m["flags"]["grid_n"] == 300
    assert {"numpy", "scipy", "matplotlib", "python"} <= set(m["versions"])
    summary = (out / "eigen_summary.csv").read_text()
    assert summary.startswith("key,value\nlambda,0.99999")


def test_empty_config_lists_missing_keys(tmp_path):
    out = tmp_path / "empty"
    assert main(["eigen", "--config", _write(tmp_path, ""), "--out", str(out), "--quiet"]) == 1
    err = _manifest(out)["error"]
    for key in ("model.tau", "model.nu", "model.beta", "model.gamma"):
        assert key in err


def test_missing_config_flag_is_a_config_error(tmp_path):
    assert main(["simulate-ode", "--out", str(tmp_path / "x"), "--quiet"]) == 1


def test_invalid_model_is_a_config_error(tmp_path):
    text = BASE.replace("model.gamma = 1", "model.gamma = -1")
    assert main(["eigen", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o"), "--quiet"]) == 1


def test_failed_assumption_exits_2_after_writing_report(tmp_path):
    text = BASE + "f.family = constant\nf.c = 2\nclosure.p = 0.5\node.system = WZ\n"
    out = tmp_path / "ss"
    assert main(["steady-states", "--config", _write(tmp_path, text), "--out", str(out), "--quiet"]) == 2
    report = (out / "assumptions.csv").read_text()
    assert "passed,false" in report
    assert _manifest(out)["exit_code"] == 2


def test_numerical_failure_exits_3(tmp_path):
    out = tmp_path / "blow"
    code = main(["simulate-ode", "--config", _write(tmp_path, WQ), "--out", str(out), "--dt", "3", "--quiet"])
    assert code == 3
    assert "orthant" in _manifest(out)["error"]


def test_simulate_ode_and_limit_cycle(tmp_path):
    cfg = _write(tmp_path, WQ.replace("time.t_end = 20", "time.t_end = 200") + "cycle.burn_in = 80\n")
    out = tmp_path / "lc"
    assert main(["limit-cycle", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    cycle = dict(line.split(",", 1) for line in (out / "cycle.csv").read_text().splitlines()[1:])
    assert cycle["detected"] == "true"
    assert float(cycle["period"]) == pytest.approx(4.772, rel=1e-3)


def test_steady_states_writes_stability(tmp_path):
    out = tmp_path / "ss"
    assert main(["steady-states", "--config", _write(tmp_path, WQ), "--out", str(out), "--quiet"]) == 0
    assert "unstable focus" in (out / "stability_0.csv").read_text()


def test_hopf_scan_and_floquet(tmp_path):
    prion = BASE + ("f.family = prion-sigmoid\nf.a = 6.3\nf.b = 1.1\nf.s = 20\nclosure.p = 4\n"
                    "prion.lam = 0.9\nprion.delta = 0.2\nhopf.samples = 21\n")
    out = tmp_path / "hopf"
    assert main(["hopf-scan", "--config", _write(tmp_path, prion), "--out", str(out), "--quiet"]) == 0
    assert "p0,3.0912332" in (out / "hopf.csv").read_text()
    assert len((out / "psi.csv").read_text().splitlines()) == 22

    floq = BASE + "control.V.sin = 0.5\ncontrol.R.a0 = 0.5\n"
    out = tmp_path / "floq"
    assert main(["floquet-compare", "--config", _write(tmp_path, floq, "f.cfg"), "--out", str(out), "--quiet"]) == 0
    assert (out / "orbit.csv").exists()


def test_simulate_pde_with_manifold_tracking(tmp_path):
    text = BASE + ("f.family = exp-decay\nf.a = 2\nclosure.p = 0.5\ngrid.n = 120\ngrid.stretch = 2\n"
                   "pde.scenario = nonlinear-drift\npde.initial = eigen\npde.W0 = 1.3\npde.Q0 = 0.5\n"
                   "pde.manifold = true\npde.snapshots = 0.5\ntime.t_end = 1\ntime.sample_dt = 0.25\n")
    out = tmp_path / "pde"
    assert main(["simulate-pde", "--config", _write(tmp_path, text), "--out", str(out), "--quiet"]) == 0
    lines = (out / "diagnostics.csv").read_text().splitlines()
    header = lines[0].split(",")
    eps = [abs(float(r.split(",")[header.index("eps_p")])) for r in lines[1:]]
    assert max(eps) < 2e-2
    assert (out / "snapshot_t0.5.csv").exists()


def test_figure_2_renders_svg(tmp_path):
    out = tmp_path / "fig2"
    assert main(["figure", "2", "--out", str(out), "--quiet"]) == 0
    svg = (out / "fig2.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    assert "fig2_trajectory.csv" in _manifest(out)["outputs"]
