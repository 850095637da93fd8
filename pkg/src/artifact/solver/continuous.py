"""Continuous solves of :class:`ConicProgram` with the interior-point core.

Light presolve only: fixed variables are substituted out, zero and
linearly dependent equality rows are dropped, and every row (or cone block)
is equilibrated to unit max-abs norm.  The postsolve undoes all three.
"""

from __future__ import annotations

import time

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..errors import SolverError
from ..program import ConicProgram
from .ipm import conelp
from .types import SolveOptions, Solution

FIX_TOL = 1e-12


def _independent_rows(A: np.ndarray, b: np.ndarray, tol: float):
    """Indices of a maximal independent row subset, or None if inconsistent."""
    if A.shape[0] == 0:
        return np.arange(0)
    _, R, piv = sla.qr(A.T, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0:
        keep = np.arange(0)
    else:
        keep = np.sort(piv[: int(np.sum(d > 1e-10 * d[0]))])
    if keep.size < A.shape[0]:
        Ak = A[keep]
        sol = np.linalg.lstsq(Ak.T, A.T, rcond=None)[0] if keep.size else np.zeros((0, A.shape[0]))
        implied = sol.T @ b[keep] if keep.size else np.zeros(A.shape[0])
        if np.max(np.abs(implied - b)) > tol * max(1.0, np.max(np.abs(b))):
            return None
    return keep


def solve_continuous(program: ConicProgram, opts: SolveOptions = SolveOptions(),
                     strict: bool = True) -> Solution:
    """Solve the continuous relaxation of ``program``.

    Returns a :class:`Solution` with status ``optimal``, ``infeasible`` or
    ``unbounded``.  If the iteration limit is hit without meeting the
    tolerances, an approximately optimal point is accepted when its residuals
    are within ``1e3 * tol``; otherwise :class:`SolverError` is raised (or an
    ``unknown`` status returned when ``strict`` is false).
    """
    t0 = time.perf_counter()
    p = program
    n = p.n
    sign = 1.0 if p.sense == "min" else -1.0
    lb, ub = p.lb, p.ub
    if np.any(lb > ub + FIX_TOL):
        return Solution("infeasible", np.nan, program=p, wall_time=time.perf_counter() - t0)
    fixed = np.isfinite(lb) & (np.abs(ub - lb) <= FIX_TOL * np.maximum(1.0, np.abs(lb)))
    free = ~fixed
    xf = np.where(fixed, lb, 0.0)
    cols = np.flatnonzero(free)
    nf = cols.size
    c = sign * p.c[cols]
    const = sign * (p.c @ xf)

    # equality rows
    A = p.A_eq[:, cols]
    b = p.b_eq - p.A_eq @ xf
    tol = opts.tol
    zero = ~np.any(A != 0, axis=1)
    if np.any(np.abs(b[zero]) > 1e3 * tol * max(1.0, float(np.max(np.abs(p.b_eq), initial=0)))):
        return Solution("infeasible", np.nan, program=p, wall_time=time.perf_counter() - t0,
                        diagnostics={"reason": "inconsistent fixed equality"})
    eq_idx = np.flatnonzero(~zero)
    keep = _independent_rows(A[eq_idx], b[eq_idx], 1e3 * tol)
    if keep is None:
        return Solution("infeasible", np.nan, program=p, wall_time=time.perf_counter() - t0,
                        diagnostics={"reason": "inconsistent equality rows"})
    eq_idx = eq_idx[keep]
    A, b = A[eq_idx], b[eq_idx]
    sa = np.max(np.abs(A), axis=1) if A.size else np.zeros(0)
    A = A / sa[:, None] if A.size else A
    b = b / sa if b.size else b

    # inequality rows and bounds
    Gi = p.A_in[:, cols]
    hi = p.b_in - p.A_in @ xf
    zr = ~np.any(Gi != 0, axis=1)
    if np.any(hi[zr] < -1e3 * tol):
        return Solution("infeasible", np.nan, program=p, wall_time=time.perf_counter() - t0,
                        diagnostics={"reason": "violated fixed inequality"})
    in_idx = np.flatnonzero(~zr)
    Gi, hi = Gi[in_idx], hi[in_idx]
    si = np.max(np.abs(Gi), axis=1) if Gi.size else np.zeros(0)
    Gi = Gi / si[:, None] if Gi.size else Gi
    hi = hi / si if hi.size else hi
    lbf, ubf = lb[cols], ub[cols]
    jl = np.flatnonzero(np.isfinite(lbf))
    ju = np.flatnonzero(np.isfinite(ubf))
    Gb = sp.vstack([
        sp.csr_matrix((-np.ones(jl.size), (np.arange(jl.size), jl)), shape=(jl.size, nf)),
        sp.csr_matrix((np.ones(ju.size), (np.arange(ju.size), ju)), shape=(ju.size, nf)),
    ])
    hb = np.concatenate([-lbf[jl], ubf[ju]])
    blocks = [sp.csr_matrix(Gi), Gb]
    hs = [hi, hb]
    qdims, qscale = [], []
    for F, f in p.soc:
        Fc = F[:, cols]
        fc = f + F @ xf
        scl = max(float(np.max(np.abs(Fc), initial=0.0)), 1e-300)
        blocks.append(sp.csr_matrix(-Fc / scl))
        hs.append(fc / scl)
        qdims.append(f.size)
        qscale.append(scl)
    l = Gi.shape[0] + Gb.shape[0]
    G = sp.vstack(blocks).tocsr() if blocks else sp.csr_matrix((0, nf))
    h = np.concatenate(hs)

    if nf == 0:
        u = xf.copy()
        feas = p.violation(u) <= 1e3 * tol
        status = "optimal" if feas else "infeasible"
        return Solution(status, p.objective(u) if feas else np.nan, u=u if feas else None, program=p,
                        bound=p.objective(u) if feas else np.nan, wall_time=time.perf_counter() - t0)

    r = conelp(c, G, h, l, qdims, A, b, feastol=tol, abstol=tol, reltol=tol,
               maxiters=opts.max_iterations)
    diag = dict(ipm_status=r.status, ipm_iterations=r.iterations, primal_residual=r.primal_residual,
                dual_residual=r.dual_residual, gap=r.gap, ridge=r.ridge)
    wall = time.perf_counter() - t0
    if r.status == "primal_infeasible":
        # Farkas multipliers on the original rows (bound multipliers are dropped)
        ceq = np.zeros(p.b_eq.size)
        ceq[eq_idx] = r.y / sa if sa.size else r.y
        cin = np.zeros(p.b_in.size)
        cin[in_idx] = r.z[: in_idx.size] / si if si.size else r.z[: in_idx.size]
        diag["certificate"] = dict(eq=ceq, ineq=cin)
        return Solution("infeasible", np.nan, program=p, iterations=r.iterations, wall_time=wall,
                        diagnostics=diag)
    if r.status == "dual_infeasible":
        ray = np.zeros(n)
        ray[cols] = r.x
        return Solution("unbounded", -sign * np.inf, program=p, iterations=r.iterations,
                        wall_time=wall, diagnostics=dict(diag, ray=ray))
    if r.status != "optimal":
        loose = 1e3 * tol
        ok = r.primal_residual <= loose and r.dual_residual <= loose and (
            r.gap <= loose or r.relative_gap <= loose)
        if not ok:
            if strict:
                raise SolverError(f"interior-point method failed to converge: {diag}")
            return Solution("unknown", np.nan, program=p, iterations=r.iterations, wall_time=wall,
                            diagnostics=diag)
        diag["inaccurate"] = True
    u = xf.copy()
    u[cols] = r.x
    value = p.objective(u)
    dual_value = sign * (r.dual_objective + const) + p.offset
    y_eq = np.zeros(p.b_eq.size)
    y_eq[eq_idx] = r.y / sa if sa.size else r.y
    z_in = np.zeros(p.b_in.size)
    z_in[in_idx] = r.z[: in_idx.size] / si if si.size else r.z[: in_idx.size]
    zq, pos = [], l
    for k, scl in zip(qdims, qscale):
        zq.append(r.z[pos:pos + k] / scl)
        pos += k
    duals = dict(eq=sign * y_eq, ineq=sign * z_in, soc=[sign * v for v in zq])
    return Solution("optimal", value, u=u, program=p, bound=dual_value, duals=duals,
                    iterations=r.iterations, wall_time=wall, diagnostics=diag)
