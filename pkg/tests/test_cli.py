import csv
import json

import numpy as np
import pytest

from sparse_spacetime.cli import (
    EXIT_OK,
    EXIT_SOLVER,
    EXIT_VALIDATION,
    EXIT_VERIFY,
    ScenarioError,
    bundled_scenarios,
    load_scenario,
    main,
    parse_scenario,
)
from sparse_spacetime.trajectory import Trajectory

SCEN = bundled_scenarios()


def scenario_data(name):
    return json.loads(SCEN[name].read_text())


def write(tmp_path, data, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def run(*args):
    return main([str(a) for a in args])


def test_bundled_set():
    assert {"free_vibration", "chain2", "chain2_dense", "chain2_velocity", "chain2_warped", "chain2_hard",
            "cantilever"} <= set(SCEN)


def test_modes(tmp_path):
    assert run("modes", SCEN["chain2"], "--out", tmp_path) == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "modes.csv")))
    assert [r["regime"] for r in rows] == ["Underdamped", "Underdamped"]
    lam = sorted(float(r["lambda"]) for r in rows)
    np.testing.assert_allclose(lam, [(3 - 5**0.5) / 2, (3 + 5**0.5) / 2], rtol=1e-12)


@pytest.mark.parametrize("name", sorted(SCEN))
def test_solve_every_bundled_scenario(tmp_path, name):
    assert run("solve", SCEN[name], "--out", tmp_path) == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"] and all(report["checks"].values())
    traj = Trajectory.from_csv(tmp_path / "trajectory.csv")
    assert traj.v is not None and np.all(np.isfinite(traj.u))


def test_free_vibration_report(tmp_path):
    assert run("solve", SCEN["free_vibration"], "--out", tmp_path) == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["max_c2_jump"] <= 1e-6 * rep["c2_scale"]
    sol = json.loads((tmp_path / "solution.json").read_text())
    assert sol["regimes"] == ["Undamped"]


def test_solve_warped(tmp_path):
    assert run("solve-warped", SCEN["chain2_warped"], "--out", tmp_path, "--max-iter", 30) == EXIT_OK
    sol = json.loads((tmp_path / "solution.json").read_text())
    assert sol["info"]["solver"] == "warped"
    assert (tmp_path / "warped.csv").exists()
    plain = Trajectory.from_csv(tmp_path / "trajectory.csv")
    warped = Trajectory.from_csv(tmp_path / "warped.csv")
    np.testing.assert_allclose(warped.u, plain.u + 0.1 * plain.u**2, rtol=1e-13, atol=1e-15)


def test_oracle_command(tmp_path, capsys):
    assert run("oracle", SCEN["chain2"], "--dt", 0.01, "--out", tmp_path) == EXIT_OK
    traj = Trajectory.from_csv(tmp_path / "oracle.csv")
    assert len(traj.times) == 301
    assert run("oracle", SCEN["chain2"], "--out", tmp_path) == EXIT_VALIDATION
    assert run("oracle", SCEN["chain2_hard"], "--dt", 0.01, "--out", tmp_path) == EXIT_VALIDATION
    assert run("oracle", SCEN["chain2"], "--dt", 0.3, "--out", tmp_path) == EXIT_VALIDATION
    assert "grid misalignment" in capsys.readouterr().err


def test_compare_order(tmp_path):
    assert run("compare", SCEN["chain2"], "--dt-sweep", "0.02,0.01,0.005", "--out", tmp_path) == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "compare.csv")))
    orders = [float(r["order"]) for r in rows[1:]]
    assert min(orders) >= 1.8
    assert float(rows[-1]["linf_error"]) <= 1e-4 * float(rows[-1]["linf_u"])
    assert run("compare", SCEN["chain2"], "--dt-sweep", "0.02,abc", "--out", tmp_path) == EXIT_VALIDATION


def test_verification_failure_exit(tmp_path):
    data = scenario_data("chain2")
    data["verify"] = {"min_order": 2.5}
    assert run("compare", write(tmp_path, data), "--dt-sweep", "0.02,0.01", "--out", tmp_path) == EXIT_VERIFY
    data["verify"] = {"smooth_tol": 1e-30, "probes": 2}
    assert run("solve", write(tmp_path, data), "--out", tmp_path) == EXIT_VERIFY
    report = json.loads((tmp_path / "report.json").read_text())
    assert not report["passed"] and not report["checks"]["smoothness"]


def test_solver_error_exit(tmp_path, capsys):
    data = {
        "model": {"type": "chain", "masses": [1.0]},
        "nodes": [0.0, 1.0],
        "constraints": [{"node": 0, "A": [[1.0]], "a": [0.0]}],
        "weights": {"c_A": 1.0, "c_B": 1.0},
    }
    assert run("solve", write(tmp_path, data), "--out", tmp_path) == EXIT_SOLVER
    assert "underdetermined" in capsys.readouterr().err


def test_malformed_json(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "model": {"type": "chain",\n  "masses": [1.0,]\n}\n')
    assert run("solve", p, "--out", tmp_path) == EXIT_VALIDATION
    err = capsys.readouterr().err
    assert f"{p}:3:" in err
    with pytest.raises(ScenarioError, match=r":3:\d+:"):
        load_scenario(p)


def test_usage_errors(tmp_path, capsys):
    assert run("fly", SCEN["chain2"]) == EXIT_VALIDATION
    assert run("solve", SCEN["chain2"], "--bogus") == EXIT_VALIDATION
    assert "usage" in capsys.readouterr().err
    assert run("solve", tmp_path / "missing.json") == EXIT_VALIDATION


@pytest.mark.parametrize(
    "edit, msg",
    [
        (lambda d: d.update(hard={"u": [[0, 0]] * 4, "v0": [0, 0], "vm": [0, 0]}), "exactly one"),
        (lambda d: d["constraints"][0].update(A={"select": [5]}), "select indices"),
        (lambda d: d["constraints"][0].update(A=[[1.0, 0.0, 0.0]]), "rows of length 2"),
        (lambda d: d["model"].update(type="blob"), "model.type"),
        (lambda d: d.pop("nodes"), "missing key"),
        (lambda d: d.update(warp={"name": "nope"}), "unknown warp"),
        (lambda d: d["model"].update(masses=[1.0, -1.0]), "masses"),
    ],
)
def test_validation_errors(edit, msg):
    data = scenario_data("chain2")
    edit(data)
    with pytest.raises(ScenarioError, match=msg):
        parse_scenario(data)


def test_select_shorthand():
    sc = parse_scenario(scenario_data("cantilever"))
    e = sc.constraints.entries[1]
    assert e.A.shape == (1, sc.system.n) and e.A[0, 15] == 1.0 and e.A.sum() == 1.0
    sc = parse_scenario(scenario_data("chain2"))
    np.testing.assert_array_equal(sc.constraints.entries[0].A, [[0.0, 1.0]])


def test_default_weights():
    data = scenario_data("chain2")
    data["weights"] = "default"
    sc = parse_scenario(data)
    assert sc.constraints.c_A == sc.constraints.c_B > 0


def test_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("solve", SCEN["chain2_velocity"], "--out", out) == EXIT_OK
    for f in ("trajectory.csv", "solution.json", "report.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_full_precision_csv(tmp_path):
    assert run("solve", SCEN["chain2"], "--out", tmp_path) == EXIT_OK
    rows = list(csv.reader(open(tmp_path / "trajectory.csv")))
    assert rows[0] == ["t", "u0", "u1", "v0", "v1"]
    digits = 0
    for row in rows[1:]:
        for field in row:
            assert format(float(field), ".17g") == field
            digits = max(digits, len(field.split("e")[0].lstrip("-").replace(".", "").lstrip("0")))
    assert digits == 17


@pytest.mark.parametrize("name, command", [("chain2_dense", "solve"), ("chain2_warped", "solve-warped"),
                                           ("chain2_hard", "solve")])
def test_verify_round_trip(tmp_path, name, command):
    assert run(command, SCEN[name], "--out", tmp_path) == EXIT_OK
    first = (tmp_path / "report.json").read_bytes()
    out = tmp_path / "v"
    assert run("verify", SCEN[name], "--solution", tmp_path / "solution.json", "--out", out) == EXIT_OK
    assert (out / "report.json").read_bytes() == first


def test_verify_rejects_mismatch(tmp_path):
    assert run("solve", SCEN["chain2"], "--out", tmp_path) == EXIT_OK
    assert run("verify", SCEN["cantilever"], "--solution", tmp_path / "solution.json", "--out", tmp_path) \
        == EXIT_VALIDATION
    assert run("verify", SCEN["chain2"], "--out", tmp_path) == EXIT_VALIDATION


def test_log_level_env(tmp_path, monkeypatch):
    monkeypatch.setenv("WIGGLY_LOG", "debug")
    assert run("modes", SCEN["free_vibration"], "--out", tmp_path) == EXIT_OK
