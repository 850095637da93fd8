"""Cutting-surface loop and worst-case extraction.

The loop alternates a master problem ``max t`` subject to ``t <= v_j' g(x)``
over the cuts collected so far with the inner problem ``min v' g(x*)`` at
the master's decision.  The master value is an upper bound and the inner
value a lower bound on the robust value; the loop stops when they are
within ``delta``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .bnb import solve_mixed
from .types import SolveOptions, Solution


def _warm(master, prev_u, cuts):
    """Previous master solution lifted to the enlarged cut set."""
    if prev_u is None:
        return None
    u = prev_u.copy()
    enc = master.meta["encoding"]
    g = enc.F_y @ u[master.blocks["y"]] + enc.F_z @ u[master.blocks["z"]]
    u[master.blocks["t"]] = float(np.min(cuts @ g))
    return u


def cutting_surface(grid, ambiguity, region, opts: SolveOptions = SolveOptions()) -> Solution:
    """Robust value by alternating master and inner solves.

    Starts from the single cut ``v = V_bar``.  ``history`` records, per
    iteration, the master bound ``t``, the inner value ``theta`` and the best
    lower bound so far.  Status ``gap-limit`` means the cut limit was hit.
    """
    from ..reformulate import build_inner, build_master, decode

    t0 = time.perf_counter()
    cuts = [np.asarray(ambiguity.moments.mean, dtype=float)]
    history = []
    best = None
    prev_u = None
    nodes = 0
    status = "gap-limit"
    upper = np.inf
    for k in range(1, opts.cut_limit + 1):
        C = np.array(cuts)
        master = build_master(grid, region, C)
        warm = _warm(master, prev_u, C)
        ms = solve_mixed(master, opts, incumbent=warm)
        nodes += ms.nodes
        if ms.status not in ("optimal", "node-limit"):
            return Solution(ms.status, np.nan, program=master, nodes=nodes, iterations=k,
                            wall_time=time.perf_counter() - t0, history=history)
        t_star = ms.bound if np.isfinite(ms.bound) else ms.value
        upper = min(upper, t_star)
        d = decode(master, ms.u)
        inner = build_inner(grid, None, ambiguity, features=d.features).solve(opts)
        theta = inner.value
        if best is None or theta > best[0]:
            best = (theta, ms, d, inner.v_star)
        history.append(dict(iteration=k, t=t_star, theta=theta, lower=best[0], upper=upper,
                            nodes=ms.nodes))
        if opts.verbose:
            print(f"cut {k}: t* = {t_star:.10f}  theta* = {theta:.10f}")
        if upper - best[0] <= opts.delta:
            status = "optimal" if ms.status == "optimal" else "node-limit"
            break
        cuts.append(inner.v_star)
        prev_u = ms.u
    theta, ms, d, v = best
    return Solution(status, theta, u=ms.u, program=ms.program, bound=upper, x=d.x, y=d.y, z=d.z,
                    v_star=v, nodes=nodes, iterations=len(history), wall_time=time.perf_counter() - t0,
                    history=history, diagnostics=dict(cuts=np.array(cuts)))


@dataclass(frozen=True)
class WorstCase:
    """Worst-case increments at a decision and the implied marginal utilities."""

    v: np.ndarray
    value: float
    features: np.ndarray
    marginals: list


def extract_worst_case(grid, solution: Solution, ambiguity, opts: SolveOptions = SolveOptions()) -> WorstCase:
    """Re-solve the inner problem at the solution's decision."""
    from ..model import marginal_values
    from ..reformulate import build_inner, decode

    g = decode(solution.program, solution.u).features
    inner = build_inner(grid, None, ambiguity, features=g).solve(opts)
    v = inner.v_star
    return WorstCase(v=v, value=inner.value, features=g, marginals=marginal_values(grid, v))


def solve_robust(grid, ambiguity, region, method: str = "direct",
                 opts: SolveOptions = SolveOptions()) -> Solution:
    """Solve the robust problem and attach the decision and worst case.

    ``method`` is ``direct`` (single-level program) or ``cutting``.
    """
    from ..errors import ModelError, SolverError
    from ..reformulate import build_robust, decode

    if method == "cutting":
        if ambiguity.kind != "ellipsoid" or ambiguity.support != "V":
            raise ModelError("the cutting-surface loop is provided for the ellipsoidal set on V")
        sol = cutting_surface(grid, ambiguity, region, opts)
    elif method == "direct":
        prog = build_robust(grid, ambiguity, region)
        sol = solve_mixed(prog, opts)
        if sol.status == "unbounded":
            raise SolverError("the robust program is unbounded; the mean set is probably empty")
    else:
        raise ModelError(f"unknown method {method!r}")
    if sol.u is not None:
        d = decode(sol.program, sol.u)
        sol.x, sol.y, sol.z = d.x, d.y, d.z
        if sol.v_star is None:
            sol.v_star = extract_worst_case(grid, sol, ambiguity, opts).v
    return sol
