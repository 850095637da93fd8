import csv
import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from artifact import cli
from artifact.model import eval_utility
from artifact.scenario import load_scenario

from test_scenario import small

GOLDEN = {
    "solution.csv": ["name", "value"],
    "worst_case.csv": ["attribute", "level", "breakpoint", "increment", "utility"],
    "variables.csv": ["name", "value"],
    "sweep_gamma.csv": ["parameter", "value", "objective", "bound", "status", "a", "b"],
    "evaluate.csv": ["trial", "pair", "kind", "parameter", "objective", "phi", "psi"],
}


def write(tmp_path, cfg, name="s.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def run(*args, env=None):
    return CliRunner().invoke(cli.main, [str(a) for a in args], env=env)


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def actions_cfg(floor=None):
    ineq = [dict(name="cap", coeffs=dict(k=1.0), rhs=3)]
    if floor is not None:
        ineq.append(dict(name="floor", coeffs=dict(k=-1.0), rhs=-floor))
    region = dict(type="actions", actions=[dict(name="k", kind="integer", upper=10)],
                  replicas=[dict(offset=dict(b=0.4), map=dict(a=dict(k=0.1)))], inequalities=ineq)
    return small(region=region)


def test_solve_writes_versioned_files(tmp_path):
    cfg = write(tmp_path, small())
    r = run("solve", "--config", cfg, "--out", tmp_path / "o")
    assert r.exit_code == 0, r.output
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["status"] == "optimal"
    assert rep["schemas"] == {"solution.csv": "solution/1", "variables.csv": "variables/1",
                              "worst_case.csv": "worst-case/1"}
    for f in ("solution.csv", "worst_case.csv", "variables.csv"):
        assert header(tmp_path / "o" / f) == GOLDEN[f]
    sol = {r["name"]: float(r["value"]) for r in table(tmp_path / "o" / "solution.csv")}
    assert sol["objective"] == pytest.approx(rep["objective"], abs=1e-11)
    assert sol["a"] + sol["b"] == pytest.approx(1.0, abs=1e-9)
    wc = table(tmp_path / "o" / "worst_case.csv")
    assert [float(w["utility"]) for w in wc if w["attribute"] == "a"][-1] + \
        [float(w["utility"]) for w in wc if w["attribute"] == "b"][-1] == pytest.approx(1.0, abs=1e-8)


def test_reruns_are_byte_identical(tmp_path):
    cfg = write(tmp_path, small())
    for d in ("x", "y"):
        assert run("solve", "--config", cfg, "--out", tmp_path / d, "--alpha", 0.2, "--seed", 7).exit_code == 0
    for f in ("solution.csv", "worst_case.csv", "variables.csv"):
        assert (tmp_path / "x" / f).read_bytes() == (tmp_path / "y" / f).read_bytes()
    run("solve", "--config", cfg, "--out", tmp_path / "z", "--alpha", 0.2, "--seed", 8)
    assert (tmp_path / "x" / "solution.csv").read_bytes() != (tmp_path / "z" / "solution.csv").read_bytes()


def test_singleton_sweep_equals_solve(tmp_path):
    cfg = write(tmp_path, small())
    assert run("solve", "--config", cfg, "--out", tmp_path / "s", "--gamma", 0.3).exit_code == 0
    r = run("sweep", "--config", cfg, "--out", tmp_path / "w", "--gamma", "0.3")
    assert r.exit_code == 0, r.output
    assert header(tmp_path / "w" / "sweep_gamma.csv") == GOLDEN["sweep_gamma.csv"]
    rows = table(tmp_path / "w" / "sweep_gamma.csv")
    assert len(rows) == 1
    rep = json.loads((tmp_path / "s" / "report.json").read_text())
    assert float(rows[0]["objective"]) == pytest.approx(rep["objective"], abs=1e-11)
    assert json.loads((tmp_path / "w" / "report.json").read_text())["schemas"] == {"sweep_gamma.csv": "sweep/1"}


def test_sweep_needs_values(tmp_path):
    cfg = write(tmp_path, small())
    r = run("sweep", "--config", cfg, "--out", tmp_path / "w")
    assert r.exit_code == 2


def test_config_error_exit_codes(tmp_path):
    cfg = write(tmp_path, small())
    assert run("solve", "--config", tmp_path / "missing.yaml").exit_code == 2
    assert run("solve", "--config", cfg, "--out", tmp_path / "o", "--gamma", 0.1, "--alpha", 0.1).exit_code == 2
    bad = write(tmp_path, dict(small(), region=dict(type="cube")), "bad.yaml")
    assert run("solve", "--config", bad, "--out", tmp_path / "o").exit_code == 2
    r = run("evaluate", "--config", cfg, "--out", tmp_path / "e", env={"DPRO_THREADS": "many"})
    assert r.exit_code == 2


def test_data_error_exit_code(tmp_path):
    cfg = write(tmp_path, small(sample=dict(file="absent.csv")))
    r = run("solve", "--config", cfg, "--out", tmp_path / "o")
    assert r.exit_code == 3
    assert "absent.csv" in r.output


def test_empty_action_set_exits_with_certificate(tmp_path):
    cfg = write(tmp_path, actions_cfg(floor=5))
    r = run("solve", "--config", cfg, "--out", tmp_path / "o")
    assert r.exit_code == 4
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["status"] == "infeasible"
    cert = rep["certificate"]
    assert set(cert) == {"cap", "floor"}
    # Farkas: the aggregated row (cap - floor) k <= 3 cap - 5 floor fails on the whole box 0 <= k <= 10
    c, rhs = cert["cap"] - cert["floor"], 3 * cert["cap"] - 5 * cert["floor"]
    assert min(0.0, 10 * c) > rhs


def test_action_solve_reports_rows(tmp_path):
    cfg = write(tmp_path, actions_cfg(floor=1))
    r = run("solve", "--config", cfg, "--out", tmp_path / "o")
    assert r.exit_code == 0, r.output
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["decision"]["k"] == 3.0
    assert rep["decision"]["a"] == pytest.approx(0.3)
    assert all(row["holds"] for row in rep["rows"].values())


def test_evaluate_single_trial(tmp_path):
    cfg = small(evaluate=dict(J=200, D=1, N=30, K=60, concentration=1.0, pairs=[[0.2, 0.2]]))
    path = write(tmp_path, cfg)
    r = run("evaluate", "--config", path, "--out", tmp_path / "e")
    assert r.exit_code == 0, r.output
    assert header(tmp_path / "e" / "evaluate.csv") == GOLDEN["evaluate.csv"]
    rows = table(tmp_path / "e" / "evaluate.csv")
    assert [r["kind"] for r in rows] == ["ellipsoid", "bootstrap"]
    for row in rows:
        assert 0 <= float(row["phi"]) <= 1 and float(row["psi"]) >= 0


def test_evaluate_phi_is_utility_at_the_mean():
    sc = load_scenario(small(evaluate=dict(N=30, K=60, pairs=[[0.2, 0.2]])))
    V = np.random.default_rng(1).dirichlet(np.ones(4), 50)
    job = dict(scenario=sc.config, base=None, evaluate=sc.config["evaluate"], seed=sc.seed, pairs=[[0.2, 0.2]])
    rows = cli._trial((job, 1, V))
    same = cli._trial((job, 1, np.repeat(V.mean(axis=0)[None], 2, axis=0)))
    for a, b in zip(rows, same):
        assert a[5] == pytest.approx(b[5], abs=1e-12)
        assert b[6] == pytest.approx(0.0, abs=1e-12)
    # the decision itself: the ellipsoid choice scored on the mean increment
    from artifact import ambiguity as am
    from artifact.reformulate import build_robust, decode
    from artifact.solver import solve_mixed

    rng = np.random.default_rng([sc.seed, 1, 1])
    S = am.SampleSet(rng.dirichlet(np.ones(4), 30), sc.grid)
    p = build_robust(sc.grid, am.build_ellipsoid(am.compute_moments(S, sc.grid), 0.2), sc.region())
    x = decode(p, solve_mixed(p).u).x
    assert rows[0][5] == pytest.approx(eval_utility(sc.grid, V.mean(axis=0), x), abs=1e-9)


def test_evaluate_threads_do_not_change_results(tmp_path):
    cfg = small(evaluate=dict(J=50, D=2, N=30, K=40, pairs=[[0.2, 0.2]]))
    path = write(tmp_path, cfg)
    assert run("evaluate", "--config", path, "--out", tmp_path / "a").exit_code == 0
    assert run("evaluate", "--config", path, "--out", tmp_path / "b", env={"DPRO_THREADS": "2"}).exit_code == 0
    assert (tmp_path / "a" / "evaluate.csv").read_bytes() == (tmp_path / "b" / "evaluate.csv").read_bytes()
    assert json.loads((tmp_path / "b" / "report.json").read_text())["threads"] == 2


def test_export_and_check(tmp_path):
    cfg = write(tmp_path, small())
    assert run("solve", "--config", cfg, "--out", tmp_path / "o").exit_code == 0
    r = run("export", "--config", cfg, "--out", tmp_path / "p.mps")
    assert r.exit_code == 0 and (tmp_path / "p.mps").exists()
    obj = json.loads((tmp_path / "o" / "report.json").read_text())["objective"]
    r = run("check", "--config", cfg, "--solution", tmp_path / "o" / "variables.csv", "--objective", obj)
    assert r.exit_code == 0 and "feasible=True" in r.output
    r = run("check", "--config", cfg, "--solution", tmp_path / "o" / "variables.csv", "--objective", obj + 0.1)
    assert r.exit_code == 4


def test_version_and_help():
    assert run("--version").output.startswith("dpro")
    assert "case" in run("--help").output
    assert run("case", "nowhere").exit_code == 2


@pytest.mark.slow
def test_project_value_is_monotone_in_alpha(tmp_path):
    sc = load_scenario("project-investment")
    rep = cli.run_sweep(sc, tmp_path, "alpha", [0.10, 0.20, 0.30])
    vals = [p["objective"] for p in rep["points"]]
    assert vals[0] <= vals[1] + 1e-7 <= vals[2] + 2e-7
    for p in rep["points"]:
        assert all(r["holds"] for r in p["rows"].values())
