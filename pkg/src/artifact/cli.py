"""``dpro``: command-line front end.

Commands::

    dpro solve    --config FILE [--out DIR] [--seed N] [--gamma G | --alpha A]
    dpro sweep    --config FILE [--out DIR] [--gamma G,G,... | --alpha A,A,...]
    dpro evaluate --config FILE [--out DIR] [--trials D] [--eval-size J]
    dpro case     NAME [--out DIR] ...        (comparative, project-investment, ev-planning)
    dpro export   --config FILE --out FILE.mps
    dpro check    --config FILE --solution FILE.csv [--objective V]

Every command writes CSV tables plus one ``report.json``.  Exit status is 0
on success, 2 for configuration errors, 3 for data errors and 4 for model or
solver failures (including infeasible or unfinished solves).
CSV output depends only on the configuration and seed, never on timing or
on the number of worker processes (``--threads`` or ``DPRO_THREADS``).
"""

from __future__ import annotations

import copy
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import ArtifactError, ConfigError, ModelError, SolverError
from .model import ActionMapped, marginal_values
from .scenario import CASES, Scenario, load_scenario, sweep_values

SCHEMAS = {
    "solution.csv": "solution/1",
    "worst_case.csv": "worst-case/1",
    "variables.csv": "variables/1",
    "sweep.csv": "sweep/1",
    "evaluate.csv": "evaluate/1",
}


# -- small helpers ---------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v == 0.0:
            return "0"
        return f"{v:.12g}"
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o).__name__)


def _write_report(out: Path, report: dict) -> None:
    report = dict(report, version=__version__, schemas={k: SCHEMAS[k] for k in report.get("files", [])
                                                         if k in SCHEMAS})
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n")


def _scenario(config, seed):
    sc = load_scenario(config)
    if seed is None:
        return sc
    cfg = copy.deepcopy(sc.config)
    cfg["seed"] = int(seed)
    cfg.setdefault("ambiguity", {})["seed"] = int(seed)
    if "dirichlet" in cfg.get("sample", {}):
        cfg["sample"]["dirichlet"]["seed"] = int(seed)
    return Scenario(cfg, base=sc.base)


def _threads(value) -> int:
    if value is None:
        value = os.environ.get("DPRO_THREADS", "1")
    try:
        n = int(value)
    except ValueError as exc:
        raise ConfigError(f"thread count must be an integer, got {value!r}") from exc
    if n < 1:
        raise ConfigError("thread count must be at least one")
    return n


def _floats(text):
    if text is None:
        return None
    try:
        vals = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot read number list {text!r}") from exc
    if not vals:
        raise ConfigError("empty parameter list")
    return vals


def _kind(sc: Scenario, kind, gamma, alpha) -> str:
    if gamma is not None and alpha is not None:
        raise ConfigError("give either --gamma or --alpha, not both")
    if kind:
        return kind
    if gamma is not None:
        return "ellipsoid"
    if alpha is not None:
        return "bootstrap"
    return sc.amb_spec.get("kind", "ellipsoid")


# -- solving ---------------------------------------------------------------


def solve_scenario(sc: Scenario, kind=None, gamma=None, alpha=None, method=None):
    """Solve one configuration; returns ``(solution, ambiguity, program)``."""
    from .reformulate import build_saa
    from .solver import solve_mixed, solve_robust

    kind = _kind(sc, kind, gamma, alpha)
    opts = sc.options()
    region = sc.region()
    _check_region(sc, region, opts)
    if kind == "saa":
        prog = build_saa(sc.grid, sc.moments().mean, region)
        sol = solve_mixed(prog, opts)
        amb = None
        if sol.u is not None:
            from .reformulate import decode

            d = decode(prog, sol.u)
            sol.x, sol.y, sol.z, sol.v_star = d.x, d.y, d.z, sc.moments().mean
    else:
        amb = sc.ambiguity(kind, gamma, alpha)
        sol = solve_robust(sc.grid, amb, region, method or sc.method, opts)
    if sol.status == "infeasible":
        raise SolverError("the decision set has no integer-feasible point", sol)
    return sol, amb


def _check_region(sc: Scenario, region, opts) -> None:
    """Fail early, with a certificate, when the action rows admit no point."""
    if not isinstance(region, ActionMapped):
        return
    from .program import ProgramBuilder
    from .solver import solve_continuous

    b = ProgramBuilder("min")
    b.add("a", region.n_actions, lb=region.lower, ub=region.upper)
    b.le({"a": region.A_in}, region.b_in)
    b.eq({"a": region.A_eq}, region.b_eq)
    sol = solve_continuous(b.build(), opts, strict=False)
    if sol.status != "infeasible":
        return
    cert = sol.diagnostics.get("certificate", {})
    names = sc.row_names.get("inequalities", [])
    weights = {}
    for i, w in enumerate(np.asarray(cert.get("ineq", []))):
        if w > 1e-9:
            weights[names[i] if i < len(names) else f"row-{i + 1}"] = float(w)
    for i, w in enumerate(np.asarray(cert.get("eq", []))):
        if abs(w) > 1e-9:
            eq = sc.row_names.get("equalities", [])
            weights[eq[i] if i < len(eq) else f"eq-{i + 1}"] = float(w)
    err = SolverError("the action set is empty; Farkas multipliers: "
                      + ", ".join(f"{k} = {v:.6g}" for k, v in sorted(weights.items())))
    err.certificate = weights
    raise err


def _decision_rows(sc: Scenario, sol) -> list:
    """(name, raw value) pairs describing the decision."""
    region = sc.region()
    rows = []
    if isinstance(region, ActionMapped):
        act = sol.program.block(sol.u, "act")
        act = np.where(np.asarray(region.discrete), np.round(act), act)
        rows += [(n, float(v)) for n, v in zip(region.action_names, act)]
        X = sc.raw_attributes(region.attributes(act))
        for r in range(X.shape[0]):
            tag = "" if X.shape[0] == 1 else f"[{r + 1}]"
            rows += [(f"{n}{tag}", float(v)) for n, v in zip(sc.names, X[r])]
    else:
        rows += [(n, float(v)) for n, v in zip(sc.names, sc.raw_attributes(sol.x))]
    return rows


def _row_checks(sc: Scenario, sol) -> dict:
    """Slack of every named action row at the reported decision."""
    region = sc.region()
    if not isinstance(region, ActionMapped):
        return {}
    act = np.round(sol.program.block(sol.u, "act"), 9)
    act = np.where(np.asarray(region.discrete), np.round(act), act)
    out = {}
    names = sc.row_names.get("inequalities", [])
    for i, (a, b) in enumerate(zip(region.A_in, region.b_in)):
        nm = names[i] if i < len(names) else f"row-{i + 1}"
        out[nm] = dict(lhs=float(a @ act), rhs=float(b), holds=bool(a @ act <= b + 1e-9))
    eq = sc.row_names.get("equalities", [])
    for i, (a, b) in enumerate(zip(region.A_eq, region.b_eq)):
        nm = eq[i] if i < len(eq) else f"eq-{i + 1}"
        out[nm] = dict(lhs=float(a @ act), rhs=float(b), holds=bool(abs(a @ act - b) <= 1e-9))
    return out


def _amb_info(amb) -> dict:
    if amb is None:
        return dict(kind="saa")
    if amb.kind == "ellipsoid":
        return dict(kind="ellipsoid", gamma=float(amb.gamma), support=amb.support)
    return dict(kind="bootstrap", alpha=float(amb.alpha), K=int(amb.K), retained=int(amb.T_hat.shape[1]),
                support=amb.support)


def run_solve(sc: Scenario, out: Path, kind=None, gamma=None, alpha=None, method=None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        sol, amb = solve_scenario(sc, kind, gamma, alpha, method)
    except SolverError as exc:
        if hasattr(exc, "certificate"):
            _write_report(out, dict(command="solve", scenario=sc.name, seed=sc.seed, status="infeasible",
                                    certificate=exc.certificate, message=str(exc), files=[]))
        raise
    from .solver.interchange import write_solution

    dec = _decision_rows(sc, sol)
    rows = [("objective", sol.value), ("bound", sol.bound), ("gap", sol.gap)] + dec
    _write_csv(out / "solution.csv", ["name", "value"], rows)
    wc = []
    for m, U in enumerate(marginal_values(sc.grid, sol.v_star)):
        t = sc.grid.breakpoints[m] * sc.signs[m]
        inc = np.concatenate([[0.0], np.diff(U)])
        for k in range(t.size):
            wc.append((sc.names[m], k, t[k], inc[k], U[k]))
    _write_csv(out / "worst_case.csv", ["attribute", "level", "breakpoint", "increment", "utility"], wc)
    write_solution(sol.program, sol.u, out / "variables.csv")
    report = dict(command="solve", scenario=sc.name, seed=sc.seed, status=sol.status, objective=sol.value,
                  bound=sol.bound, gap=sol.gap, nodes=sol.nodes, iterations=sol.iterations,
                  ambiguity=_amb_info(amb), decision=dict(dec), rows=_row_checks(sc, sol),
                  wall_time=time.perf_counter() - t0,
                  files=["solution.csv", "worst_case.csv", "variables.csv"])
    _write_report(out, report)
    if sol.status != "optimal":
        raise SolverError(f"solve ended with status {sol.status} (gap {sol.gap:.3g}); best point written", sol)
    return report


def run_sweep(sc: Scenario, out: Path, param: str, values, method=None) -> dict:
    if param not in ("gamma", "alpha"):
        raise ConfigError("sweep parameter must be gamma or alpha")
    if not values:
        raise ConfigError(f"the {param} sweep list is empty")
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rows, points, names = [], [], None
    worst = "optimal"
    for v in values:
        kw = {param: float(v)}
        sol, amb = solve_scenario(sc, "ellipsoid" if param == "gamma" else "bootstrap", method=method, **kw)
        dec = _decision_rows(sc, sol)
        names = names or [n for n, _ in dec]
        rows.append([param, float(v), sol.value, sol.bound, sol.status] + [x for _, x in dec])
        points.append(dict(value=float(v), objective=sol.value, status=sol.status, rows=_row_checks(sc, sol)))
        if sol.status != "optimal":
            worst = sol.status
    fname = f"sweep_{param}.csv"
    _write_csv(out / fname, ["parameter", "value", "objective", "bound", "status"] + names, rows)
    report = dict(command="sweep", scenario=sc.name, seed=sc.seed, parameter=param, points=points,
                  status=worst, wall_time=time.perf_counter() - t0, files=[fname])
    SCHEMAS.setdefault(fname, SCHEMAS["sweep.csv"])
    _write_report(out, report)
    if worst != "optimal":
        raise SolverError(f"at least one sweep point ended with status {worst}")
    return report


# -- out-of-sample evaluation ---------------------------------------------


def _trial(args):
    """One training sample: solve every (gamma, alpha) pair, score on the evaluation draws."""
    from . import ambiguity as am
    from .reformulate import build_robust, decode
    from .solver import solve_mixed

    cfg, d, V_eval = args
    sc = Scenario(cfg["scenario"], base=cfg["base"])
    ev = cfg["evaluate"]
    rng = np.random.default_rng([cfg["seed"], 1, d])
    conc = np.broadcast_to(np.asarray(ev.get("concentration", 1.0), float), (sc.grid.I,))
    S = am.SampleSet(rng.dirichlet(conc, int(ev.get("N", 50))), sc.grid)
    mom = am.compute_moments(S, sc.grid)
    opts = sc.options()
    region = sc.region()
    support = sc.amb_spec.get("support", "V")
    stats = am.bootstrap_statistics(S, int(ev.get("K", 1000)), int(cfg["seed"]) * 1000 + d,
                                    int(sc.amb_spec.get("directions", 1000)), moments=mom)
    rows = []
    for pi, (g, a) in enumerate(cfg["pairs"]):
        for kind, amb in (("ellipsoid", am.build_ellipsoid(mom, g, support, sc.grid)),
                          ("bootstrap", stats.region(a, support))):
            prog = build_robust(sc.grid, amb, region)
            sol = solve_mixed(prog, opts)
            if sol.u is None:
                raise SolverError(f"trial {d}: {kind} solve ended with status {sol.status}")
            u = V_eval @ decode(prog, sol.u).features
            rows.append((d, pi + 1, kind, g if kind == "ellipsoid" else a, sol.value,
                         float(u.mean()), float(u.std(ddof=1))))
    return rows


def run_evaluate(sc: Scenario, out: Path, J=None, D=None, threads=1) -> dict:
    ev = dict(sc.config.get("evaluate", {}))
    if J is not None:
        ev["J"] = J
    if D is not None:
        ev["D"] = D
    J, D = int(ev.get("J", 10000)), int(ev.get("D", 200))
    if J < 2 or D < 1:
        raise ConfigError("evaluate needs J >= 2 and D >= 1")
    pairs = ev.get("pairs", [[0.587, 0.15], [0.346, 0.30], [0.260, 0.55]])
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    conc = np.broadcast_to(np.asarray(ev.get("concentration", 1.0), float), (sc.grid.I,))
    V_eval = np.random.default_rng([sc.seed, 0]).dirichlet(conc, J)
    cfg = dict(scenario=sc.config, base=sc.base, evaluate=ev, seed=sc.seed, pairs=pairs)
    jobs = [(cfg, d, V_eval) for d in range(1, D + 1)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_trial, jobs))
    else:
        results = [_trial(j) for j in jobs]
    rows = [r for res in results for r in res]
    _write_csv(out / "evaluate.csv", ["trial", "pair", "kind", "parameter", "objective", "phi", "psi"], rows)
    summary = {}
    for kind in ("ellipsoid", "bootstrap"):
        for pi in range(len(pairs)):
            sel = [r for r in rows if r[2] == kind and r[1] == pi + 1]
            phi = np.array([r[5] for r in sel])
            psi = np.array([r[6] for r in sel])
            summary[f"{kind}-{pi + 1}"] = dict(phi_median=float(np.median(phi)), psi_median=float(np.median(psi)),
                                               phi_min=float(phi.min()), phi_max=float(phi.max()))
    report = dict(command="evaluate", scenario=sc.name, seed=sc.seed, J=J, D=D, pairs=pairs, summary=summary,
                  status="optimal", wall_time=time.perf_counter() - t0, threads=threads, files=["evaluate.csv"])
    _write_report(out, report)
    return report


# -- case studies ------------------------------------------------------------


def run_case(name: str, out: Path, seed=None, gamma=None, alpha=None, method=None) -> dict:
    if name not in CASES:
        raise ConfigError(f"unknown case {name!r}; choose from {', '.join(CASES)}")
    sc = _scenario(name, seed)
    out.mkdir(parents=True, exist_ok=True)
    summary = dict(command="case", scenario=name, seed=sc.seed, parts={})
    if name == "comparative":
        summary["parts"]["saa"] = run_solve(sc, out / "saa", kind="saa")
    g = gamma[0] if gamma else None
    a = alpha[0] if alpha else None
    summary["parts"]["solve"] = run_solve(sc, out / "solve", gamma=g, alpha=a, method=method)
    sweeps = sc.config.get("sweep", {})
    for param, override in (("gamma", gamma), ("alpha", alpha)):
        if override or param in sweeps:
            vals = override or sweep_values(sweeps[param])
            summary["parts"][f"sweep_{param}"] = run_sweep(sc, out / "sweeps", param, vals, method)
    if name == "ev-planning":
        p = sc.config["parameters"]
        summary["pillar_cap"] = int(np.floor(float(p["pillar_cap"]) / float(p["pillar_cost"]) + 1e-9))
        summary["pillars"] = summary["parts"]["solve"]["decision"].get("y")
        if "sweep_alpha" in summary["parts"]:
            summary["pillars_sweep"] = _sweep_column(out / "sweeps" / "sweep_alpha.csv", "y")
    summary["status"] = "optimal"
    summary["files"] = []
    _write_report(out, summary)
    return summary


def _sweep_column(path: Path, name: str) -> list:
    with open(path, newline="") as fh:
        return [float(r[name]) for r in csv.DictReader(fh)]


# -- click wiring --------------------------------------------------------------


def _guard(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ArtifactError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)


config_opt = click.option("--config", "config", required=True, type=click.Path(dir_okay=False),
                          help="Scenario YAML file or packaged case name.")
out_opt = click.option("--out", "out", default="dpro-out", show_default=True, type=click.Path(file_okay=False),
                       help="Output directory.")
seed_opt = click.option("--seed", type=click.IntRange(min=0), default=None, help="Override every seed.")
method_opt = click.option("--method", type=click.Choice(["direct", "cutting"]), default=None,
                          help="Single-level program or cutting-surface loop.")


@click.group(context_settings=dict(help_option_names=["-h", "--help"]))
@click.version_option(__version__, prog_name="dpro")
def main():
    """Preference-robust choice with piecewise-linear utilities."""


@main.command()
@config_opt
@out_opt
@seed_opt
@click.option("--gamma", type=float, default=None, help="Ellipsoid radius (selects the ellipsoidal set).")
@click.option("--alpha", type=float, default=None, help="Bootstrap level (selects the bootstrap set).")
@click.option("--kind", type=click.Choice(["ellipsoid", "bootstrap", "saa"]), default=None)
@method_opt
def solve(config, out, seed, gamma, alpha, kind, method):
    """Solve one scenario and write the decision and worst case."""
    def go():
        sc = _scenario(config, seed)
        r = run_solve(sc, Path(out), kind, gamma, alpha, method)
        click.echo(f"{r['status']}: objective {r['objective']:.10g}")
    _guard(go)


@main.command()
@config_opt
@out_opt
@seed_opt
@click.option("--gamma", default=None, help="Comma-separated radii; overrides the configured gamma sweep.")
@click.option("--alpha", default=None, help="Comma-separated levels; overrides the configured alpha sweep.")
@method_opt
def sweep(config, out, seed, gamma, alpha, method):
    """Optimal value over a list of gamma or alpha values."""
    def go():
        sc = _scenario(config, seed)
        todo = []
        g, a = _floats(gamma), _floats(alpha)
        if g or a:
            todo = [(k, v) for k, v in (("gamma", g), ("alpha", a)) if v]
        else:
            todo = [(k, sweep_values(v)) for k, v in sc.config.get("sweep", {}).items() if k in ("gamma", "alpha")]
        if not todo:
            raise ConfigError("no sweep list in the scenario and none given")
        for param, vals in todo:
            r = run_sweep(sc, Path(out), param, vals, method)
            click.echo(f"{param}: {len(r['points'])} points")
    _guard(go)


@main.command()
@config_opt
@out_opt
@seed_opt
@click.option("--trials", "D", type=click.IntRange(min=1), default=None, help="Training samples D.")
@click.option("--eval-size", "J", type=click.IntRange(min=2), default=None, help="Evaluation draws J.")
@click.option("--threads", default=None, help="Worker processes (default: DPRO_THREADS or 1).")
def evaluate(config, out, seed, D, J, threads):
    """Out-of-sample mean and spread of robust decisions."""
    def go():
        sc = _scenario(config, seed)
        if "dirichlet" not in sc.config.get("sample", {}) and "evaluate" not in sc.config:
            raise ConfigError("evaluate needs a generator: an 'evaluate' section with a concentration")
        r = run_evaluate(sc, Path(out), J, D, _threads(threads))
        click.echo(f"{r['D']} trials written")
    _guard(go)


@main.command()
@click.argument("name", type=click.Choice(sorted(CASES)))
@out_opt
@seed_opt
@click.option("--gamma", default=None, help="Comma-separated radii replacing the configured values.")
@click.option("--alpha", default=None, help="Comma-separated levels replacing the configured values.")
@method_opt
def case(name, out, seed, gamma, alpha, method):
    """Run a packaged case study end to end."""
    def go():
        r = run_case(name, Path(out), seed, _floats(gamma), _floats(alpha), method)
        click.echo(f"{name}: objective {r['parts']['solve']['objective']:.10g}")
    _guard(go)


@main.command()
@config_opt
@click.option("--out", "out", required=True, type=click.Path(dir_okay=False), help="MPS file to write.")
@click.option("--gamma", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--kind", type=click.Choice(["ellipsoid", "bootstrap", "saa"]), default=None)
def export(config, out, gamma, alpha, kind):
    """Write the single-level program in MPS form for an external solver."""
    def go():
        prog = _program(load_scenario(config), kind, gamma, alpha)
        from .solver.interchange import write_mps

        write_mps(prog, out)
        click.echo(f"{prog.n} columns written to {out}")
    _guard(go)


@main.command()
@config_opt
@click.option("--solution", required=True, type=click.Path(dir_okay=False), help="name,value CSV.")
@click.option("--objective", type=float, default=None, help="Objective value claimed by the solver.")
@click.option("--gamma", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--kind", type=click.Choice(["ellipsoid", "bootstrap", "saa"]), default=None)
def check(config, solution, objective, gamma, alpha, kind):
    """Re-validate an externally produced solution."""
    def go():
        from .solver.interchange import read_solution, validate

        prog = _program(load_scenario(config), kind, gamma, alpha)
        v = validate(prog, read_solution(prog, solution), np.nan if objective is None else objective)
        click.echo(f"feasible={v.feasible} violation={v.max_violation:.3g} integrality={v.integrality:.3g} "
                   f"objective={v.objective:.10g}")
        if not v.ok:
            raise SolverError("the solution does not pass re-validation")
    _guard(go)


def _program(sc: Scenario, kind, gamma, alpha):
    from .reformulate import build_robust, build_saa

    kind = _kind(sc, kind, gamma, alpha)
    if kind == "saa":
        return build_saa(sc.grid, sc.moments().mean, sc.region())
    return build_robust(sc.grid, sc.ambiguity(kind, gamma, alpha), sc.region())


if __name__ == "__main__":  # pragma: no cover
    main()
