"""Branch-and-bound over the integer variables of a :class:`ConicProgram`.

Relaxations are solved with the interior-point core.  The search dives
depth-first until it holds an incumbent and then switches to best-first.
Binaries that form a one-hot group (an equality row ``sum z = 1`` over
binaries) are branched as a group: the members are split into two ordered
halves and each child forbids one half.  This matches the segment-selection
structure of the utility encoding, where each attribute selects exactly one
segment.  Other integers use the usual floor/ceil dichotomy.

A program may name variable blocks in ``meta["branch_first"]``; a fractional
variable in them is branched on before anything else.  The reformulations list the
integer actions there, because fixing the actions fixes every attribute and
leaves the segment choice to follow.  ``meta["propagate"]``, when present,
is called as ``propagate(program, lb, ub)`` at every node to tighten bounds
(or return ``None`` for an empty node) before the relaxation is solved.
"""

from __future__ import annotations

import heapq
import itertools
import time

import numpy as np

from ..program import ConicProgram
from .continuous import solve_continuous
from .types import SolveOptions, Solution

HEURISTIC_EVERY = 10


def one_hot_groups(p: ConicProgram) -> list:
    """Equality rows that say 'exactly one of these binaries is one'."""
    groups, seen = [], set()
    binary = p.integer & (p.lb >= 0) & (p.ub <= 1)
    for row, rhs in zip(p.A_eq, p.b_eq):
        nz = np.flatnonzero(row)
        if nz.size < 2 or rhs == 0 or not np.all(binary[nz]):
            continue
        if not np.allclose(row[nz] / rhs, 1.0, rtol=0, atol=1e-12):
            continue
        if seen.intersection(nz.tolist()):
            continue
        seen.update(nz.tolist())
        groups.append(nz)
    return groups


class _Search:
    def __init__(self, p: ConicProgram, opts: SolveOptions):
        self.p = p
        self.opts = opts
        self.sign = 1.0 if p.sense == "max" else -1.0
        self.groups = one_hot_groups(p)
        grouped = np.zeros(p.n, dtype=bool)
        for g in self.groups:
            grouped[g] = True
        self.loose = np.flatnonzero(p.integer & ~grouped)
        first = [np.arange(p.n)[p.blocks[k]] for k in p.meta.get("branch_first", ()) if k in p.blocks]
        first = np.concatenate(first) if first else np.zeros(0, dtype=int)
        self.first = first[p.integer[first]]
        self.propagate = p.meta.get("propagate")
        self.best_u = None
        self.best = -np.inf
        self.history = []
        self.lp_solves = 0
        self.failures = 0

    def relax(self, lb, ub) -> Solution:
        self.lp_solves += 1
        return solve_continuous(self.p.with_bounds(lb, ub), self.opts, strict=False)

    def gap_ok(self, bound: float) -> bool:
        return bound <= self.best + self.opts.tol * max(1.0, abs(self.best))

    def offer(self, u: np.ndarray, value: float) -> bool:
        score = self.sign * value
        tie = abs(score - self.best) <= 1e-12 * max(1.0, abs(score))
        if score > self.best and not tie:
            better = True
        elif tie and self.best_u is not None:
            a = np.round(u[self.p.integer], 9)
            b = np.round(self.best_u[self.p.integer], 9)
            diff = np.flatnonzero(a != b)
            better = diff.size > 0 and a[diff[0]] < b[diff[0]]
        else:
            better = self.best_u is None and np.isfinite(score)
        if better:
            self.best, self.best_u = max(score, self.best) if tie else score, u.copy()
        return better

    def polish(self, u: np.ndarray, lb, ub) -> None:
        """Fix the integers at their rounded values and re-solve the rest."""
        lb, ub = lb.copy(), ub.copy()
        r = np.round(u[self.p.integer])
        lb[self.p.integer] = r
        ub[self.p.integer] = r
        if np.any(r < self.p.lb[self.p.integer] - 1e-9) or np.any(r > self.p.ub[self.p.integer] + 1e-9):
            return
        sol = self.relax(lb, ub)
        if sol.status == "optimal":
            self.offer(sol.u, sol.value)

    def round_heuristic(self, u: np.ndarray, lb, ub) -> None:
        v = u.copy()
        for g in self.groups:
            vals = np.where(ub[g] > 0.5, v[g], -np.inf)
            pick = g[int(np.argmax(vals))]
            v[g] = 0.0
            v[pick] = 1.0
        v[self.loose] = np.clip(np.round(v[self.loose]), lb[self.loose], ub[self.loose])
        self.polish(v, lb, ub)

    def fractional(self, u: np.ndarray, ub) -> tuple:
        """Pick the branching object: ('group', g, split) or ('var', j) or None."""
        tol = self.opts.int_tol
        if self.first.size:
            f = np.abs(u[self.first] - np.round(u[self.first]))
            k = int(np.argmax(f))
            if f[k] > tol:
                return ("var", self.first[k])
        best_g, best_mass = None, tol
        for gi, g in enumerate(self.groups):
            frac = np.minimum(u[g], 1.0 - u[g])
            mass = float(np.sum(np.maximum(frac, 0.0)))
            if np.max(frac) > tol and mass > best_mass + 1e-12:
                best_g, best_mass = gi, mass
        best_j, best_f = None, tol
        for j in self.loose:
            f = abs(u[j] - np.round(u[j]))
            if f > best_f + 1e-12:
                best_j, best_f = j, f
        if best_g is None and best_j is None:
            return None
        if best_g is not None and best_mass >= best_f:
            g = self.groups[best_g]
            vals = u[g]
            frac = np.minimum(vals, 1.0 - vals)
            k = int(np.argmax(frac))
            right_mass = float(np.sum(vals[k + 1:]))
            cut = k + 1 if right_mass > tol else k
            return ("group", g, cut)
        return ("var", best_j)

    def children(self, choice, u, lb, ub) -> list:
        if choice[0] == "group":
            _, g, cut = choice
            left, right = g[:cut], g[cut:]
            kids = []
            for keep, drop in ((left, right), (right, left)):
                nub = ub.copy()
                nub[drop] = 0.0
                kids.append((float(np.sum(u[keep])), lb.copy(), nub))
        else:
            j = choice[1]
            lo, hi = np.floor(u[j]), np.ceil(u[j])
            ub1 = ub.copy()
            ub1[j] = lo
            lb2 = lb.copy()
            lb2[j] = hi
            kids = [(hi - u[j], lb.copy(), ub1), (u[j] - lo, lb2, ub.copy())]
        # preferred child last so that a dive can pop it directly
        kids.sort(key=lambda k: k[0])
        return [(kl, ku) for _, kl, ku in kids]


def solve_mixed(program: ConicProgram, opts: SolveOptions = SolveOptions(),
                incumbent=None) -> Solution:
    """Globally solve a mixed-integer LP/SOCP by branch-and-bound.

    ``incumbent`` may hold a feasible full variable vector used as a warm
    start.  The returned ``bound`` is the best proven bound, so
    ``abs(bound - value)`` is the remaining optimality gap.
    """
    t0 = time.perf_counter()
    p = program
    if not p.is_mixed:
        return solve_continuous(p, opts)
    S = _Search(p, opts)
    if incumbent is not None:
        u0 = np.asarray(incumbent, dtype=float)
        if u0.shape == (p.n,) and p.violation(u0) <= 1e-7 and p.integrality_residual(u0) <= opts.int_tol:
            S.polish(u0, p.lb.copy(), p.ub.copy())

    counter = itertools.count()
    heap = []
    stack = [(np.inf, p.lb.copy(), p.ub.copy(), 0)]
    nodes = 0
    status = "optimal"
    root_status = None
    while stack or heap:
        if time.perf_counter() - t0 > opts.time_limit or nodes >= opts.node_limit:
            status = "node-limit"
            break
        if stack and S.best_u is None:
            bound, lb, ub, depth = stack.pop()
        else:
            for item in stack:
                heapq.heappush(heap, (-item[0], next(counter), item))
            stack = []
            bound, lb, ub, depth = heapq.heappop(heap)[2]
        if S.best_u is not None and S.gap_ok(bound):
            continue
        nodes += 1
        if S.propagate is not None:
            tight = S.propagate(p, lb, ub)
            if tight is None:
                continue
            lb, ub = tight
        sol = S.relax(lb, ub)
        if root_status is None:
            root_status = sol.status
        if sol.status == "infeasible":
            continue
        if sol.status == "unbounded":
            status = "unbounded"
            break
        if sol.status != "optimal":
            # keep the subtree: split on the box midpoint under the parent's bound
            S.failures += 1
            mid = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
            box = np.isfinite(lb) & np.isfinite(ub)
            mid[box] = 0.5 * (lb[box] + ub[box])
            choice = S.fractional(mid + 0.25 * (ub - lb > 0.5), ub)
            if choice is None:
                continue
            for kl, ku in S.children(choice, mid, lb, ub):
                entry = (bound, kl, ku, depth + 1)
                if S.best_u is None:
                    stack.append(entry)
                else:
                    heapq.heappush(heap, (-bound, next(counter), entry))
            continue
        node_bound = S.sign * sol.value
        if depth == 0 or (S.lp_solves and nodes % HEURISTIC_EVERY == 0):
            S.round_heuristic(sol.u, lb, ub)
        if S.best_u is not None and S.gap_ok(node_bound):
            continue
        choice = S.fractional(sol.u, ub)
        if choice is None:
            S.polish(sol.u, lb, ub)
            continue
        kids = S.children(choice, sol.u, lb, ub)
        if S.best_u is None:
            for kl, ku in kids:
                stack.append((node_bound, kl, ku, depth + 1))
        else:
            for kl, ku in kids:
                heapq.heappush(heap, (-node_bound, next(counter), (node_bound, kl, ku, depth + 1)))
        open_bounds = [-h[0] for h in heap] + [s[0] for s in stack]
        S.history.append(dict(node=nodes, incumbent=S.best,
                              bound=max(open_bounds + [S.best]) if open_bounds else S.best))

    wall = time.perf_counter() - t0
    open_bounds = [-h[0] for h in heap] + [s[0] for s in stack]
    if status == "unbounded":
        return Solution("unbounded", S.sign * np.inf, program=p, nodes=nodes, wall_time=wall)
    if S.best_u is None:
        st = "infeasible" if status == "optimal" else status
        bound = S.sign * max(open_bounds) if open_bounds and st != "infeasible" else np.nan
        return Solution(st, np.nan, program=p, bound=bound, nodes=nodes, wall_time=wall,
                        history=S.history, diagnostics=dict(lp_solves=S.lp_solves, failures=S.failures))
    bound = max(open_bounds + [S.best]) if open_bounds else S.best
    value = S.sign * S.best
    return Solution(status, value, u=S.best_u, program=p, bound=S.sign * bound, nodes=nodes,
                    wall_time=wall, history=S.history,
                    diagnostics=dict(lp_solves=S.lp_solves, failures=S.failures, groups=len(S.groups),
                                     root_status=root_status))
