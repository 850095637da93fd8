"""Additive piecewise-linear utilities: grids, feature map, block matrices.

A utility on ``M`` attributes is fixed by breakpoints
``t[m][0] < ... < t[m][I_m]`` and a nonnegative increment vector ``v`` that
sums to one.  Every function here is pure; the dataclasses are frozen and
their arrays are marked read-only so they can be shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import numpy.typing as npt

from .errors import DomainError, InvariantError, ModelError

Array = npt.NDArray[np.float64]

SUM_TOL = 1e-9
NEG_TOL = -1e-12
DOMAIN_TOL = 1e-9

__all__ = [
    "AttributeGrid",
    "BlockMatrices",
    "Polyhedron",
    "ActionMapped",
    "FeasibleRegion",
    "assemble_block_matrices",
    "encode_segment_selection",
    "eval_utility",
    "feature_map",
    "marginal_values",
    "validate_increments",
    "is_concave",
    "project_simplex",
    "simplex_region",
]


def _frozen(a) -> Array:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class AttributeGrid:
    """Breakpoint sequences, one strictly increasing array per attribute."""

    breakpoints: tuple
    names: tuple = ()

    def __post_init__(self):
        bps = tuple(_frozen(np.ravel(t)) for t in self.breakpoints)
        if not bps:
            raise ModelError("a grid needs at least one attribute")
        for m, t in enumerate(bps):
            if t.size < 2:
                raise ModelError(f"attribute {m} needs at least two breakpoints")
            if not np.all(np.isfinite(t)):
                raise ModelError(f"attribute {m} has non-finite breakpoints")
            if np.any(np.diff(t) <= 0):
                raise ModelError(f"breakpoints of attribute {m} are not strictly increasing")
        if sum(t.size - 1 for t in bps) < 2:
            raise ModelError("grids with a single segment in total are degenerate (need I >= 2)")
        names = tuple(self.names) if self.names else tuple(f"attr{m + 1}" for m in range(len(bps)))
        if len(names) != len(bps):
            raise ModelError("one name per attribute is required")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "names", names)

    @classmethod
    def uniform(cls, segments: Sequence[int], lower=0.0, upper=1.0) -> "AttributeGrid":
        return cls(tuple(np.linspace(lower, upper, k + 1) for k in segments))

    @property
    def M(self) -> int:
        return len(self.breakpoints)

    @property
    def sizes(self) -> tuple:
        return tuple(t.size - 1 for t in self.breakpoints)

    @property
    def I(self) -> int:
        return int(sum(self.sizes))

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)

    def block(self, m: int) -> slice:
        off = self.offsets
        return slice(int(off[m]), int(off[m + 1]))

    @property
    def lower(self) -> Array:
        return np.array([t[0] for t in self.breakpoints])

    @property
    def upper(self) -> Array:
        return np.array([t[-1] for t in self.breakpoints])

    def widths(self, m: int) -> Array:
        return np.diff(self.breakpoints[m])

    @property
    def max_width(self) -> float:
        return float(max(np.max(self.widths(m)) for m in range(self.M)))

    def split(self, v) -> list:
        v = np.asarray(v, dtype=float)
        return [v[..., self.block(m)] for m in range(self.M)]


def validate_increments(grid: AttributeGrid, v, concave: bool = False) -> Array:
    """Return ``v`` as an array after checking simplex (and concavity) membership."""
    v = np.asarray(v, dtype=float)
    if v.shape != (grid.I,):
        raise InvariantError(f"increment vector has shape {v.shape}, expected ({grid.I},)")
    if not np.all(np.isfinite(v)):
        raise InvariantError("increment vector has non-finite entries")
    if v.min() < NEG_TOL:
        raise InvariantError(f"increment vector has a negative entry {v.min():.3e}")
    if abs(v.sum() - 1.0) > SUM_TOL:
        raise InvariantError(f"increments sum to {v.sum():.12f}, not 1")
    if concave and not is_concave(grid, v):
        raise InvariantError("increment vector is not concave (A v >= 0 fails)")
    return v


def is_concave(grid: AttributeGrid, v, tol: float = 1e-10) -> bool:
    slopes = [vm / grid.widths(m) for m, vm in enumerate(grid.split(v))]
    return all(np.all(np.diff(s) <= tol) for s in slopes)


def _active_segments(t: Array, x: Array) -> np.ndarray:
    # t[i-1] < x <= t[i] selects segment i (1-based); the left endpoint joins segment 1
    idx = np.searchsorted(t, x, side="left")
    return np.clip(idx, 1, t.size - 1) - 1


def _check_domain(grid: AttributeGrid, X: Array, clamp: bool) -> None:
    if clamp:
        return
    lo, hi = grid.lower, grid.upper
    span = hi - lo
    bad = (X < lo - DOMAIN_TOL * span) | (X > hi + DOMAIN_TOL * span)
    if np.any(bad):
        m = int(np.argwhere(bad)[0][-1])
        raise DomainError(
            f"attribute {grid.names[m]} value outside [{lo[m]}, {hi[m]}]"
        )


def feature_map(grid: AttributeGrid, x, clamp: bool = False) -> Array:
    """Feature vector ``f(x)`` with ``u(x; v) = v @ f(x)``.

    ``x`` may be a single attribute vector of length ``M`` or an ``(n, M)``
    array, in which case an ``(n, I)`` array is returned.  With ``clamp`` the
    utility saturates outside the box instead of raising.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != grid.M:
        raise DomainError(f"attribute vector has {X.shape[1]} entries, expected {grid.M}")
    _check_domain(grid, X, clamp)
    n = X.shape[0]
    out = np.zeros((n, grid.I))
    rows = np.arange(n)
    for m, t in enumerate(grid.breakpoints):
        xm = X[:, m]
        yd = 1.0 / np.diff(t)
        zd = -t[:-1] * yd
        seg = _active_segments(t, xm)
        block = (np.arange(t.size - 1)[None, :] < seg[:, None]).astype(float)
        block[rows, seg] = xm * yd[seg] + zd[seg]
        if clamp:
            block[xm < t[0]] = 0.0
            block[xm > t[-1]] = 1.0
        out[:, grid.block(m)] = block
    return out[0] if single else out


def eval_utility(grid: AttributeGrid, v, x, clamp: bool = False) -> float:
    """Evaluate ``u(x; v)`` segment by segment (independently of the feature map)."""
    v = validate_increments(grid, v)
    x = np.asarray(x, dtype=float)
    if x.shape != (grid.M,):
        raise DomainError(f"attribute vector has shape {x.shape}, expected ({grid.M},)")
    _check_domain(grid, x[None, :], clamp)
    total = 0.0
    for m, (t, vm) in enumerate(zip(grid.breakpoints, grid.split(v))):
        xm = float(np.clip(x[m], t[0], t[-1]))
        if xm <= t[0]:
            continue
        i = int(_active_segments(t, np.array([xm]))[0])
        total += vm[:i].sum() + vm[i] * (xm - t[i]) / (t[i + 1] - t[i])
    return float(total)


def marginal_values(grid: AttributeGrid, v) -> list:
    """Per-attribute utilities at the breakpoints, ``u_m(t[m][i]; v_m)``."""
    return [np.concatenate([[0.0], np.cumsum(vm)]) for vm in grid.split(v)]


@dataclass(frozen=True)
class BlockMatrices:
    """Matrices of the linear reformulations, block diagonal by attribute."""

    A: Array
    C: Array
    Y: Array
    Z: Array
    B: Array
    D: Array
    E: Array
    H_minus: Array
    H_plus: Array


def _block_diag(blocks: list) -> Array:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def assemble_block_matrices(grid: AttributeGrid) -> BlockMatrices:
    """Assemble A, C, Y, Z, B, D, E and H^-/H^+ for ``grid``."""
    A, Y, Z, B, D, E, Hm, Hp = ([] for _ in range(8))
    for t in grid.breakpoints:
        k = t.size - 1
        yd = 1.0 / np.diff(t)
        Am = np.zeros((k - 1, k))
        Am[np.arange(k - 1), np.arange(k - 1)] = yd[:-1]
        Am[np.arange(k - 1), np.arange(1, k)] = -yd[1:]
        A.append(Am)
        Y.append(np.diag(yd))
        Zm = np.triu(np.ones((k, k)), 1)
        Zm[np.diag_indices(k)] = -t[:-1] * yd
        Z.append(Zm)
        B.append(np.tril(np.ones((k, k))))
        D.append(t[1:, None].copy())
        E.append(np.ones((k, 1)))
        Hm.append(np.diag(t[:-1]))
        Hp.append(np.diag(t[1:]))
    I = grid.I
    C = np.eye(I)[:-1]
    return BlockMatrices(
        A=_frozen(_block_diag(A)) if grid.I > grid.M else _frozen(np.zeros((0, I))),
        C=_frozen(C),
        Y=_frozen(_block_diag(Y)),
        Z=_frozen(_block_diag(Z)),
        B=_frozen(_block_diag(B)),
        D=_frozen(_block_diag(D)),
        E=_frozen(_block_diag(E)),
        H_minus=_frozen(_block_diag(Hm)),
        H_plus=_frozen(_block_diag(Hp)),
    )


def encode_segment_selection(grid: AttributeGrid, x) -> tuple:
    """One-hot segment indicators ``z`` and placed values ``y`` for ``x``.

    ``Y @ y + Z @ z`` reproduces ``feature_map(grid, x)`` exactly.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (grid.M,):
        raise DomainError(f"attribute vector has shape {x.shape}, expected ({grid.M},)")
    _check_domain(grid, x[None, :], clamp=False)
    y = np.zeros(grid.I)
    z = np.zeros(grid.I)
    for m, t in enumerate(grid.breakpoints):
        i = grid.offsets[m] + int(_active_segments(t, x[m:m + 1])[0])
        z[i] = 1.0
        y[i] = x[m]
    return y, z


def project_simplex(v) -> tuple:
    """Euclidean projection onto ``{v >= 0, sum(v) = 1}``; returns (p, distance)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = int(np.nonzero(u - css / k > 0)[0][-1])
    theta = css[rho] / (rho + 1)
    p = np.maximum(v - theta, 0.0)
    return p, float(np.linalg.norm(p - v))


# -- feasible regions ----------------------------------------------------


def _mat(a, cols: int) -> Array:
    if a is None:
        return np.zeros((0, cols))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((0, cols))
    if a.shape[1] != cols:
        raise ModelError(f"constraint matrix has {a.shape[1]} columns, expected {cols}")
    return a


def _vec(b, rows: int) -> Array:
    b = np.zeros(0) if b is None else np.ravel(np.asarray(b, dtype=float))
    if b.size != rows:
        raise ModelError(f"right-hand side has {b.size} entries, expected {rows}")
    return b


@dataclass(frozen=True)
class Polyhedron:
    """Attribute-space region ``{A_in x <= b_in, A_eq x = b_eq}`` inside the grid box."""

    M: int
    A_in: Array = None
    b_in: Array = None
    A_eq: Array = None
    b_eq: Array = None

    def __post_init__(self):
        A_in = _mat(self.A_in, self.M)
        A_eq = _mat(self.A_eq, self.M)
        object.__setattr__(self, "A_in", _frozen(A_in))
        object.__setattr__(self, "b_in", _frozen(_vec(self.b_in, A_in.shape[0])))
        object.__setattr__(self, "A_eq", _frozen(A_eq))
        object.__setattr__(self, "b_eq", _frozen(_vec(self.b_eq, A_eq.shape[0])))

    def contains(self, grid: AttributeGrid, x, tol: float = 1e-7) -> bool:
        x = np.asarray(x, dtype=float)
        ok = np.all(x >= grid.lower - tol) and np.all(x <= grid.upper + tol)
        ok = ok and np.all(self.A_in @ x <= self.b_in + tol)
        return bool(ok and np.all(np.abs(self.A_eq @ x - self.b_eq) <= tol))


KINDS = ("binary", "integer", "continuous")


@dataclass(frozen=True)
class ActionMapped:
    """Attributes as affine images ``x_r = offsets[r] + maps[r] @ a`` of actions ``a``.

    Several replicas ``r`` (for instance, communities evaluating the same plan)
    share the action vector; the objective averages their utilities with
    ``weights``.  Actions carry a kind, bounds and linear rows.  With
    ``clamp`` an attribute may leave the grid box, in which case its utility
    saturates at the nearest end.
    """

    offsets: Array
    maps: Array
    kinds: tuple
    lower: Array
    upper: Array
    A_in: Array = None
    b_in: Array = None
    A_eq: Array = None
    b_eq: Array = None
    weights: Array = None
    clamp: bool = False
    action_names: tuple = ()

    def __post_init__(self):
        offsets = np.atleast_2d(np.asarray(self.offsets, dtype=float))
        maps = np.asarray(self.maps, dtype=float)
        if maps.ndim == 2:
            maps = maps[None]
        R, M = offsets.shape
        if maps.shape[:2] != (R, M):
            raise ModelError("maps must have shape (replicas, M, actions)")
        n = maps.shape[2]
        kinds = tuple(self.kinds)
        if len(kinds) != n or any(k not in KINDS for k in kinds):
            raise ModelError(f"one kind from {KINDS} per action is required")
        lower = _vec(self.lower, n).copy()
        upper = _vec(self.upper, n).copy()
        for j, k in enumerate(kinds):
            if k == "binary":
                lower[j] = max(lower[j], 0.0)
                upper[j] = min(upper[j], 1.0)
            if k != "continuous" and not (np.isfinite(lower[j]) and np.isfinite(upper[j])):
                raise ModelError(f"discrete action {j} needs finite bounds")
        if np.any(lower > upper):
            raise ModelError("action lower bound exceeds upper bound")
        weights = np.full(R, 1.0 / R) if self.weights is None else _vec(self.weights, R)
        if np.any(weights <= 0):
            raise ModelError("replica weights must be positive")
        A_in = _mat(self.A_in, n)
        A_eq = _mat(self.A_eq, n)
        names = tuple(self.action_names) if self.action_names else tuple(f"a{j + 1}" for j in range(n))
        for key, val in dict(
            offsets=offsets, maps=maps, lower=lower, upper=upper, weights=weights,
            A_in=A_in, b_in=_vec(self.b_in, A_in.shape[0]),
            A_eq=A_eq, b_eq=_vec(self.b_eq, A_eq.shape[0]),
        ).items():
            object.__setattr__(self, key, _frozen(val))
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "action_names", names)

    @property
    def n_actions(self) -> int:
        return self.maps.shape[2]

    @property
    def n_replicas(self) -> int:
        return self.offsets.shape[0]

    @property
    def M(self) -> int:
        return self.offsets.shape[1]

    @property
    def discrete(self) -> np.ndarray:
        return np.array([k != "continuous" for k in self.kinds])

    def attributes(self, a) -> Array:
        """Attribute vectors of every replica, shape (replicas, M)."""
        return self.offsets + self.maps @ np.asarray(a, dtype=float)

    def interval_bounds(self) -> tuple:
        """Interval enclosure of the attributes over the action box."""
        lo = np.where(self.maps >= 0, self.lower, self.upper)
        hi = np.where(self.maps >= 0, self.upper, self.lower)
        with np.errstate(invalid="ignore"):
            low = self.offsets + np.nansum(np.where(self.maps == 0, 0.0, self.maps * lo), axis=2)
            high = self.offsets + np.nansum(np.where(self.maps == 0, 0.0, self.maps * hi), axis=2)
        return low, high

    def contains(self, a, tol: float = 1e-7) -> bool:
        a = np.asarray(a, dtype=float)
        ok = np.all(a >= self.lower - tol) and np.all(a <= self.upper + tol)
        ok = ok and np.all(self.A_in @ a <= self.b_in + tol)
        ok = ok and np.all(np.abs(self.A_eq @ a - self.b_eq) <= tol)
        disc = self.discrete
        return bool(ok and np.all(np.abs(a[disc] - np.round(a[disc])) <= 1e-6))


FeasibleRegion = Union[Polyhedron, ActionMapped]


def simplex_region(M: int) -> Polyhedron:
    """The region ``{x >= 0, sum(x) = 1}`` (box bounds come from the grid)."""
    return Polyhedron(M=M, A_eq=np.ones((1, M)), b_eq=np.ones(1))
