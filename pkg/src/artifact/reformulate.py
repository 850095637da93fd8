"""Single-level programs for the robust choice problem.

Every builder returns a maximisation :class:`ConicProgram` whose optimal
value is ``max_x min_{v in F} v' g(x)``, where ``g(x)`` is the (replica
weighted) feature vector of the chosen attributes and ``F`` the set of
feasible means.  The inner minimum is replaced by its conic dual, so the
whole problem becomes one program:

* ellipsoid, general support:    mixed-integer SOCP
* bootstrap, general support:    MILP
* ellipsoid, concave support:    SOCP (mixed only for discrete actions)
* bootstrap, concave support:    LP (mixed only for discrete actions)

With general support the nonconvex feature map is encoded with one-hot
segment indicators ``z`` and placed copies ``y`` of the attribute value.
With concave support the worst-case utility is concave in ``x`` and a
continuous representation through ``lambda`` multipliers suffices.

Attribute values are grouped: all (replica, attribute) pairs that share the
same affine map are encoded once, with their weights summed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import numpy.typing as npt

from .ambiguity import BootstrapRegion, EllipsoidSet, feasible_mean_set
from .errors import DomainError, ModelError
from .model import (
    ActionMapped,
    AttributeGrid,
    DOMAIN_TOL,
    Polyhedron,
    assemble_block_matrices,
    feature_map,
)
from .program import ConicProgram, ProgramBuilder
from .solver.types import SolveOptions, Solution

Array = npt.NDArray[np.float64]

__all__ = [
    "ConicProgram",
    "Encoding",
    "InnerProblem",
    "attribute_ranges",
    "build_inner",
    "build_lp_concave_bootstrap",
    "build_master",
    "build_milp_bootstrap",
    "build_misocp_general",
    "build_saa",
    "build_socp_concave",
    "decode",
]


# -- attribute groups ----------------------------------------------------


@dataclass(frozen=True)
class Group:
    """One encoded attribute value ``x_g = offset + coeffs @ a``."""

    m: int
    weight: float
    offset: float
    coeffs: Optional[Array]
    members: tuple
    lo: float
    hi: float


@dataclass
class Encoding:
    """How an outer program represents ``g(x)``.

    ``F_y`` and ``F_z`` map the ``y``/``z`` blocks to the weighted feature
    vector (general support only).  ``member_group[r, m]`` is the group that
    carries attribute ``m`` of replica ``r``.
    """

    groups: list
    member_group: np.ndarray
    F_y: Optional[Array] = None
    F_z: Optional[Array] = None
    segments: list = field(default_factory=list)


def _lp_range(region: ActionMapped, h: Array) -> tuple:
    """Bounds of ``h @ a`` over the continuous relaxation of the action set."""
    from .solver import solve_continuous

    out = []
    for sense in ("min", "max"):
        b = ProgramBuilder(sense)
        b.add("a", region.n_actions, lb=region.lower, ub=region.upper)
        b.objective({"a": h})
        b.le({"a": region.A_in}, region.b_in)
        b.eq({"a": region.A_eq}, region.b_eq)
        sol = solve_continuous(b.build(), strict=False)
        if sol.status == "infeasible":
            raise ModelError("the action set is empty")
        out.append(sol.value if sol.status == "optimal" else (-np.inf if sense == "min" else np.inf))
    return out[0], out[1]


def attribute_ranges(grid: AttributeGrid, region) -> list:
    """Attribute groups with the range each value can take over the region."""
    if isinstance(region, Polyhedron):
        if region.M != grid.M:
            raise ModelError("region and grid disagree on M")
        return [Group(m, 1.0, 0.0, None, ((0, m),), float(grid.lower[m]), float(grid.upper[m]))
                for m in range(grid.M)]
    if not isinstance(region, ActionMapped):
        raise ModelError(f"unsupported region type {type(region).__name__}")
    if region.M != grid.M:
        raise ModelError("region and grid disagree on M")
    low, high = region.interval_bounds()
    keyed = {}
    for r in range(region.n_replicas):
        for m in range(grid.M):
            h = region.maps[r, m]
            key = (m, float(region.offsets[r, m]), h.tobytes())
            if key not in keyed:
                keyed[key] = dict(m=m, w=0.0, off=float(region.offsets[r, m]), h=h.copy(), mem=[],
                                  lo=float(low[r, m]), hi=float(high[r, m]))
            keyed[key]["w"] += float(region.weights[r])
            keyed[key]["mem"].append((r, m))
    groups = []
    for d in keyed.values():
        a, b = float(grid.lower[d["m"]]), float(grid.upper[d["m"]])
        lo, hi = d["lo"], d["hi"]
        if region.clamp and (lo < a - DOMAIN_TOL or hi > b + DOMAIN_TOL) and np.any(d["h"] != 0):
            # tighten with the linear rows before adding saturation segments
            plo, phi = _lp_range(region, d["h"])
            lo, hi = max(lo, d["off"] + plo), min(hi, d["off"] + phi)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ModelError(f"attribute {d['m']} is unbounded over the action set")
        if not region.clamp:
            lo, hi = max(lo, a), min(hi, b)
            if lo > hi + DOMAIN_TOL:
                raise DomainError(f"attribute {d['m']} can never lie in the grid box")
        groups.append(Group(d["m"], d["w"], d["off"], d["h"], tuple(d["mem"]), lo, hi))
    return groups


def _member_map(groups: list, R: int, M: int) -> np.ndarray:
    out = np.full((R, M), -1, dtype=int)
    for gi, g in enumerate(groups):
        for r, m in g.members:
            out[r, m] = gi
    return out


def _add_region(b: ProgramBuilder, grid: AttributeGrid, region, groups: list, box_lower: bool,
                box_upper: bool) -> None:
    """Add the ``x`` (and ``act``) blocks with the region's own rows."""
    if isinstance(region, Polyhedron):
        b.add("x", grid.M, lb=grid.lower, ub=grid.upper)
        b.le({"x": region.A_in}, region.b_in)
        b.eq({"x": region.A_eq}, region.b_eq)
        return
    n = region.n_actions
    b.add("act", n, lb=region.lower, ub=region.upper, integer=region.discrete)
    b.meta["branch_first"] = ("act",)
    b.le({"act": region.A_in}, region.b_in)
    b.eq({"act": region.A_eq}, region.b_eq)
    lo = np.array([g.lo for g in groups])
    hi = np.array([g.hi for g in groups])
    if box_lower:
        lo = np.maximum(lo, [grid.lower[g.m] for g in groups])
    if box_upper:
        hi = np.minimum(hi, [grid.upper[g.m] for g in groups])
    G = len(groups)
    b.add("x", G, lb=lo, ub=hi)
    H = np.array([g.coeffs for g in groups]).reshape(G, n)
    b.eq({"x": np.eye(G), "act": -H}, np.array([g.offset for g in groups]))


def _segments(grid: AttributeGrid, g: Group) -> list:
    """(lo, hi, P, Q) per segment so that f_m(x) = P x + Q on [lo, hi]."""
    m = g.m
    t = grid.breakpoints[m]
    k = t.size - 1
    w = np.diff(t)
    out = []
    if g.lo < t[0] - DOMAIN_TOL:
        out.append((g.lo, t[0], np.zeros(k), np.zeros(k)))
    for i in range(k):
        P = np.zeros(k)
        P[i] = 1.0 / w[i]
        Q = np.zeros(k)
        Q[:i] = 1.0
        Q[i] = -t[i] * P[i]
        out.append((t[i], t[i + 1], P, Q))
    if g.hi > t[-1] + DOMAIN_TOL:
        out.append((t[-1], g.hi, np.zeros(k), np.ones(k)))
    return out


def _add_segment_encoding(b: ProgramBuilder, grid: AttributeGrid, groups: list) -> tuple:
    """One-hot segment rows; returns ``(F_y, F_z, segments)``."""
    segs = [_segments(grid, g) for g in groups]
    S = sum(len(s) for s in segs)
    G = len(groups)
    Fy = np.zeros((grid.I, S))
    Fz = np.zeros((grid.I, S))
    sum_z = np.zeros((G, S))
    sum_y = np.zeros((G, S))
    lo = np.zeros(S)
    hi = np.zeros(S)
    owner = []
    s0 = 0
    for gi, (g, sg) in enumerate(zip(groups, segs)):
        blk = grid.block(g.m)
        for j, (l, h, P, Q) in enumerate(sg):
            s = s0 + j
            Fy[blk, s] = g.weight * P
            Fz[blk, s] = g.weight * Q
            lo[s], hi[s] = l, h
            owner.append(gi)
        sum_z[gi, s0:s0 + len(sg)] = 1.0
        sum_y[gi, s0:s0 + len(sg)] = 1.0
        s0 += len(sg)
    # y_s lies in [lo_s z_s, hi_s z_s]; the box below is implied but helps the relaxation
    b.add("y", S, lb=np.minimum(lo, 0.0), ub=np.maximum(hi, 0.0))
    b.add("z", S, lb=0.0, ub=1.0, integer=True)
    b.eq({"z": sum_z}, np.ones(G))
    b.eq({"y": sum_y, "x": -np.eye(G)}, np.zeros(G))
    b.le({"y": -np.eye(S), "z": np.diag(lo)}, np.zeros(S))
    b.le({"y": np.eye(S), "z": -np.diag(hi)}, np.zeros(S))
    return Fy, Fz, list(zip(owner, lo, hi))


class SegmentPropagator:
    """Node presolve for action-mapped programs with a segment encoding.

    Tightens action bounds with the action rows (activity bounds, rounded
    for integers), derives an interval for every attribute value and switches
    off the segments that interval misses.  Called by branch-and-bound as
    ``propagate(program, lb, ub)``; returns ``None`` when a node is empty.
    """

    TOL = 1e-9

    def __init__(self, region: ActionMapped, groups: list, segments: list):
        self.H = np.array([g.coeffs for g in groups])
        self.off = np.array([g.offset for g in groups])
        rows = [(region.A_in, region.b_in), (region.A_eq, region.b_eq), (-region.A_eq, -region.b_eq)]
        self.A = np.vstack([r[0] for r in rows])
        self.b = np.concatenate([r[1] for r in rows])
        self.integer = np.asarray(region.discrete, dtype=bool)
        self.owner = np.array([o for o, _, _ in segments], dtype=int)
        self.seg_lo = np.array([l for _, l, _ in segments])
        self.seg_hi = np.array([h for _, _, h in segments])

    @staticmethod
    def _span(H, lo, hi):
        """Interval of ``H @ a`` for ``a`` in the box ``[lo, hi]``."""
        pos, neg = np.maximum(H, 0.0), np.minimum(H, 0.0)
        with np.errstate(invalid="ignore"):
            a = np.where(pos > 0, pos * lo, 0.0) + np.where(neg < 0, neg * hi, 0.0)
            b = np.where(pos > 0, pos * hi, 0.0) + np.where(neg < 0, neg * lo, 0.0)
        return a.sum(axis=-1), b.sum(axis=-1)

    def _tighten(self, lo, hi):
        for _ in range(3):
            changed = False
            for a, rhs in zip(self.A, self.b):
                nz = np.flatnonzero(a)
                if nz.size == 0:
                    continue
                low, _ = self._span(a[nz][None, :], lo[nz], hi[nz])
                low = float(low[0])
                if not np.isfinite(low):
                    continue
                for j in nz:
                    aj = a[j]
                    contrib = aj * lo[j] if aj > 0 else aj * hi[j]
                    slack = rhs - (low - contrib)
                    if aj > 0:
                        nb = slack / aj
                        if self.integer[j]:
                            nb = math.floor(nb + self.TOL)
                        if nb < hi[j] - self.TOL * max(1.0, abs(nb)):
                            hi[j], changed = nb, True
                    else:
                        nb = slack / aj
                        if self.integer[j]:
                            nb = math.ceil(nb - self.TOL)
                        if nb > lo[j] + self.TOL * max(1.0, abs(nb)):
                            lo[j], changed = nb, True
            if np.any(lo > hi + self.TOL) or not changed:
                break
        return lo, hi

    def __call__(self, program, lb, ub):
        lb, ub = lb.copy(), ub.copy()
        ia, ix, iz = program.blocks["act"], program.blocks["x"], program.blocks["z"]
        lo, hi = self._tighten(lb[ia].copy(), ub[ia].copy())
        if np.any(lo > hi + self.TOL):
            return None
        lb[ia], ub[ia] = lo, np.maximum(hi, lo)
        xl, xh = self._span(self.H, lo, hi)
        xl = np.maximum(xl + self.off, lb[ix])
        xh = np.minimum(xh + self.off, ub[ix])
        if np.any(xl > xh + self.TOL * np.maximum(1.0, np.abs(xl))):
            return None
        lb[ix], ub[ix] = xl, np.maximum(xh, xl)
        tol = self.TOL * np.maximum(1.0, np.abs(self.seg_lo))
        miss = (self.seg_hi < xl[self.owner] - tol) | (self.seg_lo > xh[self.owner] + tol)
        zub = ub[iz].copy()
        zub[miss] = 0.0
        zlb = lb[iz].copy()
        alive = zub > 0.5
        count = np.bincount(self.owner, weights=alive, minlength=len(xl))
        if np.any(count == 0):
            return None
        single = alive & (count[self.owner] == 1)
        zlb[single] = 1.0
        lb[iz], ub[iz] = zlb, zub
        return lb, ub


def _general_outer(grid: AttributeGrid, region, kind: str) -> tuple:
    groups = attribute_ranges(grid, region)
    b = ProgramBuilder("max")
    _add_region(b, grid, region, groups, box_lower=False, box_upper=False)
    Fy, Fz, segs = _add_segment_encoding(b, grid, groups)
    R = region.n_replicas if isinstance(region, ActionMapped) else 1
    enc = Encoding(groups, _member_map(groups, R, grid.M), Fy, Fz, segs)
    b.meta.update(kind=kind, grid=grid, region=region, encoding=enc)
    if isinstance(region, ActionMapped):
        b.meta["propagate"] = SegmentPropagator(region, groups, segs)
    return b, enc


def _concave_outer(grid: AttributeGrid, region, kind: str) -> tuple:
    """``x``/``act`` blocks plus ``lambda`` rows representing ``B' lambda <= g(x)``."""
    groups = attribute_ranges(grid, region)
    b = ProgramBuilder("max")
    _add_region(b, grid, region, groups, box_lower=True, box_upper=False)
    G = len(groups)
    sizes = [grid.sizes[g.m] for g in groups]
    L = sum(sizes)
    b.add("lam", L, lb=0.0)
    # placement of B_m' lambda_g into the I-vector
    P = np.zeros((grid.I, L))
    Dt = np.zeros((G, L))
    Et = np.zeros((G, L))
    pos = 0
    for gi, (g, k) in enumerate(zip(groups, sizes)):
        t = grid.breakpoints[g.m]
        blk = grid.block(g.m)
        P[blk, pos:pos + k] = np.triu(np.ones((k, k)))
        Dt[gi, pos:pos + k] = t[1:] - t[0]
        Et[gi, pos:pos + k] = 1.0
        pos += k
    w = np.array([g.weight for g in groups])
    a = np.array([grid.lower[g.m] for g in groups])
    b.le({"lam": Dt, "x": -np.diag(w)}, -w * a)
    b.le({"lam": Et}, w)
    R = region.n_replicas if isinstance(region, ActionMapped) else 1
    enc = Encoding(groups, _member_map(groups, R, grid.M))
    b.meta.update(kind=kind, grid=grid, region=region, encoding=enc)
    return b, enc, P


def _check_support(amb, expected: str, builder: str) -> None:
    if amb.support != expected:
        alt = {"V": "the concave builders", "VC": "the general-support builders"}[amb.support]
        raise ModelError(f"{builder} needs support {expected!r}; this set has {amb.support!r}, use {alt}")


def _check_grid(grid: AttributeGrid, amb) -> None:
    if amb.I != grid.I:
        raise ModelError(f"ambiguity set has I = {amb.I}, grid has I = {grid.I}")


def _check_nonempty(grid: AttributeGrid, amb) -> None:
    """An empty mean set makes the dual unbounded; report it as a model error."""
    build_inner(grid, None, amb, features=np.zeros(grid.I)).solve()


# -- the four single-level programs --------------------------------------


def _ellipsoid_rows(b: ProgramBuilder, amb: EllipsoidSet, I: int) -> dict:
    """Blocks tau, eta, pi, the cone and objective; returns the v-row terms."""
    scale = 1.0 / math.sqrt(amb.gamma)
    Q = amb.whitening
    C = np.eye(I)[:-1]
    b.add("tau", 1)
    b.add("eta", I - 1)
    b.add("pi", 1, lb=0.0)
    head = np.zeros((I, 1))
    head[0, 0] = 1.0
    b.soc({"pi": head, "eta": np.vstack([np.zeros((1, I - 1)), np.eye(I - 1)])}, np.zeros(I))
    b.objective({"eta": scale * (Q @ amb.center), "pi": -1.0, "tau": 1.0})
    return {"eta": scale * C.T @ Q, "tau": np.ones((I, 1))}


def _bootstrap_rows(b: ProgramBuilder, amb: BootstrapRegion, I: int) -> dict:
    C = np.eye(I)[:-1]
    W = amb.moments.sqrt @ amb.T_hat / math.sqrt(amb.N)
    L = W.shape[1]
    b.add("tau", 1)
    b.add("eta", I - 1)
    b.add("pi", 1)
    b.le({"eta": W.T, "pi": np.ones((L, 1))}, np.zeros(L))
    b.objective({"eta": amb.moments.reduced_mean, "pi": 1.0, "tau": 1.0})
    return {"eta": C.T, "tau": np.ones((I, 1))}


def _finish_general(b: ProgramBuilder, enc: Encoding, terms: dict, I: int) -> ConicProgram:
    terms = dict(terms, y=-enc.F_y, z=-enc.F_z)
    b.le(terms, np.zeros(I))
    return b.build()


def _finish_concave(b: ProgramBuilder, grid: AttributeGrid, P: Array, terms: dict) -> ConicProgram:
    A = assemble_block_matrices(grid).A
    terms = dict(terms, lam=-P)
    if A.shape[0]:
        b.add("zeta", A.shape[0], lb=0.0)
        terms["zeta"] = A.T
    b.le(terms, np.zeros(grid.I))
    return b.build()


def build_misocp_general(grid: AttributeGrid, ellipsoid: EllipsoidSet, region) -> ConicProgram:
    """Mixed-integer SOCP for the ellipsoidal set on the full simplex support."""
    _check_grid(grid, ellipsoid)
    _check_support(ellipsoid, "V", "build_misocp_general")
    b, enc = _general_outer(grid, region, "misocp")
    b.meta["ambiguity"] = ellipsoid
    terms = _ellipsoid_rows(b, ellipsoid, grid.I)
    return _finish_general(b, enc, terms, grid.I)


def build_milp_bootstrap(grid: AttributeGrid, boot: BootstrapRegion, region) -> ConicProgram:
    """MILP for the bootstrap region on the full simplex support."""
    _check_grid(grid, boot)
    _check_support(boot, "V", "build_milp_bootstrap")
    b, enc = _general_outer(grid, region, "milp")
    b.meta["ambiguity"] = boot
    terms = _bootstrap_rows(b, boot, grid.I)
    return _finish_general(b, enc, terms, grid.I)


def build_socp_concave(grid: AttributeGrid, ellipsoid: EllipsoidSet, region) -> ConicProgram:
    """SOCP for the ellipsoidal set when increments are restricted to be concave."""
    _check_grid(grid, ellipsoid)
    _check_support(ellipsoid, "VC", "build_socp_concave")
    _check_nonempty(grid, ellipsoid)
    b, enc, P = _concave_outer(grid, region, "socp-concave")
    b.meta["ambiguity"] = ellipsoid
    terms = _ellipsoid_rows(b, ellipsoid, grid.I)
    return _finish_concave(b, grid, P, terms)


def build_lp_concave_bootstrap(grid: AttributeGrid, boot: BootstrapRegion, region) -> ConicProgram:
    """LP for the bootstrap region when increments are restricted to be concave."""
    _check_grid(grid, boot)
    _check_support(boot, "VC", "build_lp_concave_bootstrap")
    _check_nonempty(grid, boot)
    b, enc, P = _concave_outer(grid, region, "lp-concave")
    b.meta["ambiguity"] = boot
    terms = _bootstrap_rows(b, boot, grid.I)
    return _finish_concave(b, grid, P, terms)


def build_robust(grid: AttributeGrid, ambiguity, region) -> ConicProgram:
    """Dispatch on the ambiguity kind and support."""
    table = {
        ("ellipsoid", "V"): build_misocp_general,
        ("bootstrap", "V"): build_milp_bootstrap,
        ("ellipsoid", "VC"): build_socp_concave,
        ("bootstrap", "VC"): build_lp_concave_bootstrap,
    }
    return table[(ambiguity.kind, ambiguity.support)](grid, ambiguity, region)


def build_master(grid: AttributeGrid, region, cuts) -> ConicProgram:
    """``max t`` s.t. ``t <= v_j' g(x)`` for every cut ``v_j``."""
    cuts = np.atleast_2d(np.asarray(cuts, dtype=float))
    if cuts.shape[1] != grid.I:
        raise ModelError("cut vectors must have I entries")
    b, enc = _general_outer(grid, region, "master")
    b.add("t", 1)
    b.objective({"t": 1.0})
    k = cuts.shape[0]
    b.le({"t": np.ones((k, 1)), "y": -cuts @ enc.F_y, "z": -cuts @ enc.F_z}, np.zeros(k))
    b.meta["cuts"] = cuts.copy()
    return b.build()


def build_saa(grid: AttributeGrid, v, region) -> ConicProgram:
    """Nominal problem ``max_x v' g(x)`` (the sample-average limit for ``v = V_bar``)."""
    return build_master(grid, region, np.asarray(v, dtype=float)[None, :])


# -- decoding ------------------------------------------------------------


@dataclass(frozen=True)
class Decoded:
    """Model quantities recovered from a solved outer program."""

    x: Array
    attributes: Array
    features: Array
    action: Optional[Array] = None
    y: Optional[Array] = None
    z: Optional[Array] = None


def decode(program: ConicProgram, u) -> Decoded:
    """Recover x (or the action), the replica attributes and ``g(x)``."""
    u = np.asarray(u, dtype=float)
    grid = program.meta["grid"]
    region = program.meta["region"]
    enc: Encoding = program.meta["encoding"]
    xg = program.block(u, "x")
    if isinstance(region, ActionMapped):
        act = program.block(u, "act").copy()
        disc = region.discrete
        act[disc] = np.round(act[disc])
        X = region.attributes(act)
        g = features_of(grid, X, region.weights, clamp=True)
        x = act
    else:
        act = None
        x = np.clip(xg, grid.lower, grid.upper)
        X = x[None, :]
        g = feature_map(grid, x)
    y = program.block(u, "y") if "y" in program.blocks else None
    z = program.block(u, "z") if "z" in program.blocks else None
    return Decoded(x=x, attributes=X, features=g, action=act, y=y, z=z)


def features_of(grid: AttributeGrid, X, weights=None, clamp: bool = False) -> Array:
    """Weighted feature vector ``sum_r w_r f(x_r)`` of replica attributes."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    w = np.full(X.shape[0], 1.0 / X.shape[0]) if weights is None else np.asarray(weights, float)
    return w @ feature_map(grid, X, clamp=clamp)


# -- inner problem -------------------------------------------------------


@dataclass(frozen=True)
class InnerProblem:
    """``min v' g`` over the feasible means, with ``g`` fixed."""

    features: Array
    program: ConicProgram
    support: str

    def solve(self, opts: SolveOptions = SolveOptions()) -> Solution:
        from .solver import solve_continuous

        sol = solve_continuous(self.program, opts)
        if sol.status == "infeasible":
            raise ModelError("the ambiguity set has no feasible mean")
        if sol.status == "optimal":
            sol.v_star = self.decode(sol.u)
        return sol

    def decode(self, u) -> Array:
        return np.asarray(u)[self.program.blocks["v"]].copy()


def build_inner(grid: AttributeGrid, x_star, ambiguity, support: Optional[str] = None, *,
                weights=None, clamp: bool = False, features=None) -> InnerProblem:
    """Inner minimisation at a fixed decision.

    Either ``x_star`` (an attribute vector, or a replica matrix with
    ``weights``) or the feature vector ``features`` must be given.
    """
    support = support or ambiguity.support
    if support != ambiguity.support:
        ambiguity = _with_support(ambiguity, support)
    _check_grid(grid, ambiguity)
    if features is None:
        if x_star is None:
            raise ModelError("build_inner needs x_star or features")
        g = features_of(grid, x_star, weights, clamp)
    else:
        g = np.asarray(features, dtype=float)
        if g.shape != (grid.I,):
            raise ModelError("features must have I entries")
    ms = feasible_mean_set(ambiguity, grid)
    b = ProgramBuilder("min")
    b.add("v", grid.I, lb=0.0)
    b.objective({"v": g})
    terms = {"v": ms.A_v}
    if ms.n_w:
        b.add("w", ms.n_w, lb=0.0)
        terms["w"] = ms.A_w
    b.eq(terms, ms.b)
    b.le({"v": ms.G_v}, ms.g)
    for F, f in ms.soc:
        b.soc({"v": F}, f)
    b.meta.update(kind="inner", ambiguity=ambiguity)
    return InnerProblem(features=g, program=b.build(), support=support)


def _with_support(amb, support: str):
    from dataclasses import replace

    return replace(amb, support=support)
