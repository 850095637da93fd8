"""Increment samples from preference data.

Two sources are supported.  Market shares under a multinomial logit model
with utility ``eta * v' f(x)`` give linear equations in ``q = eta * v``
after taking log ratios against a reference brand.  Conjoint responses give
part-worths by dummy-variable least squares, whose differences are the
increments.
"""

from __future__ import annotations

import csv
import warnings
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt
from scipy.optimize import nnls

from .ambiguity import SampleSet
from .errors import DataError, DegeneracyError, DesignError, InvariantError
from .model import AttributeGrid, feature_map, marginal_values, project_simplex

Array = npt.NDArray[np.float64]

SHARE_TOL = 1e-9
ETA_TOL = 1e-10


@dataclass(frozen=True)
class ShareObservation:
    """Brand attributes ``X`` (J x M) and their market shares in one period."""

    label: str
    X: Array
    shares: Array

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        s = np.asarray(self.shares, dtype=float)
        if s.shape != (X.shape[0],):
            raise DataError(f"period {self.label}: one share per brand is required")
        if np.any(s <= 0):
            raise InvariantError(f"period {self.label}: shares must be strictly positive")
        if abs(s.sum() - 1.0) > SHARE_TOL:
            raise InvariantError(f"period {self.label}: shares sum to {s.sum()!r}, not 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "shares", s)


@dataclass(frozen=True)
class MnlFit:
    eta: float
    v: Array
    rms: float
    rank: int


def mnl_shares(grid: AttributeGrid, X, eta: float, v, clamp: bool = False) -> Array:
    """Logit shares ``exp(eta u(x_j)) / sum_k exp(eta u(x_k))``."""
    u = feature_map(grid, X, clamp=clamp) @ np.asarray(v, dtype=float)
    z = eta * (u - u.max())
    e = np.exp(z)
    return e / e.sum()


def mnl_extract(obs: ShareObservation, grid: AttributeGrid, clamp: bool = False) -> MnlFit:
    """Recover ``(eta, v)`` from one period of shares.

    Solves ``min ||D q - r||`` over ``q >= 0`` where the rows of ``D`` are
    ``f(x_j) - f(x_J)`` and ``r_j = log(S_j / S_J)``; then ``eta = sum(q)``
    and ``v = q / eta``.
    """
    F = feature_map(grid, obs.X, clamp=clamp)
    D = F[:-1] - F[-1]
    r = np.log(obs.shares[:-1]) - np.log(obs.shares[-1])
    rank = int(np.linalg.matrix_rank(D)) if D.size else 0
    if rank < grid.I:
        warnings.warn(f"period {obs.label}: share design has rank {rank} < I = {grid.I}; "
                      "returning a regularised minimum-norm fit", RuntimeWarning, stacklevel=2)
        eps = 1e-8 * max(1.0, float(np.linalg.norm(D)))
        q, _ = nnls(np.vstack([D, eps * np.eye(grid.I)]), np.concatenate([r, np.zeros(grid.I)]))
    else:
        q, _ = nnls(D, r)
    eta = float(q.sum())
    if eta <= ETA_TOL:
        raise DegeneracyError(f"period {obs.label}: the shares carry no utility signal (eta = 0)")
    res = D @ q - r
    rms = float(np.sqrt(np.mean(res ** 2))) if res.size else 0.0
    return MnlFit(eta=eta, v=q / eta, rms=rms, rank=rank)


def mnl_samples(observations, grid: AttributeGrid, clamp: bool = False) -> tuple:
    """One increment vector per period; returns ``(SampleSet, fits)``."""
    fits = [mnl_extract(o, grid, clamp) for o in observations]
    return SampleSet(np.array([f.v for f in fits]), grid), fits


def read_shares(path, M: int) -> list:
    """Read ``period, brand, share, x1..xM`` rows into observations."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"shares file {path} not found")
    periods = OrderedDict()
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or len(header) < 3 + M:
            raise DataError(f"shares file {path} needs period, brand, share and {M} attribute columns")
        for row in rd:
            if not row:
                continue
            try:
                periods.setdefault(row[0], []).append((float(row[2]), [float(v) for v in row[3:3 + M]]))
            except ValueError as exc:
                raise DataError(f"cannot parse shares file {path}: {exc}") from exc
    return [ShareObservation(k, np.array([x for _, x in rows]), np.array([s for s, _ in rows]))
            for k, rows in periods.items()]


# -- conjoint ------------------------------------------------------------


@dataclass(frozen=True)
class ConjointResponse:
    """Profiles as breakpoint indices (J x M, 0..I_m) with their response."""

    label: str
    levels: np.ndarray
    responses: Array

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.levels))
        if not np.issubdtype(L.dtype, np.integer):
            if np.any(L != np.round(L)):
                raise InvariantError(f"group {self.label}: profile levels must be breakpoint indices")
            L = L.astype(int)
        y = np.asarray(self.responses, dtype=float)
        if y.shape != (L.shape[0],):
            raise DataError(f"group {self.label}: one response per profile is required")
        if np.any(y < 0) or np.any(y > 1):
            raise InvariantError(f"group {self.label}: responses must lie in [0, 1]")
        object.__setattr__(self, "levels", L)
        object.__setattr__(self, "responses", y)


@dataclass(frozen=True)
class PartWorthFit:
    """Fitted increments (projected onto the simplex) and fit diagnostics."""

    v: Array
    raw: Array
    partworths: list
    intercept: float
    projection_distance: float
    r2: float
    adjusted_r2: float
    importance: Array


def _dummies(grid: AttributeGrid, levels: np.ndarray) -> Array:
    J = levels.shape[0]
    X = np.zeros((J, grid.I))
    for m in range(grid.M):
        k = levels[:, m]
        if np.any(k < 0) or np.any(k > grid.sizes[m]):
            raise InvariantError(f"attribute {m + 1}: level index outside 0..{grid.sizes[m]}")
        rows = np.flatnonzero(k > 0)
        X[rows, grid.offsets[m] + k[rows] - 1] = 1.0
    return X


def conjoint_responses(grid: AttributeGrid, levels, v, intercept: float = 0.0) -> Array:
    """Additive utilities ``intercept + sum_m u_m(t_{m, level}; v_m)`` of each profile."""
    levels = np.atleast_2d(np.asarray(levels, dtype=int))
    U = marginal_values(grid, v)
    return intercept + sum(U[m][levels[:, m]] for m in range(grid.M))


def conjoint_partworth(resp: ConjointResponse, grid: AttributeGrid) -> PartWorthFit:
    """Part-worths by least squares with an intercept; increments are their differences."""
    if resp.levels.shape[1] != grid.M:
        raise DataError(f"group {resp.label}: profiles have {resp.levels.shape[1]} attributes, grid has {grid.M}")
    X = np.hstack([np.ones((resp.levels.shape[0], 1)), _dummies(grid, resp.levels)])
    _check_design(X, grid)
    y = resp.responses
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = X @ beta
    J, p = X.shape
    sst = float(np.sum((y - y.mean()) ** 2))
    sse = float(np.sum((y - fitted) ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else 1.0
    dof = J - p
    adj = 1.0 - (1.0 - r2) * (J - 1) / dof if dof > 0 else float("nan")
    pw = [np.concatenate([[0.0], beta[1:][grid.block(m)]]) for m in range(grid.M)]
    raw = np.concatenate([np.diff(u) for u in pw])
    total = raw.sum()
    scaled = raw / total if abs(total) > 1e-12 else np.full(grid.I, 1.0 / grid.I)
    v, dist = project_simplex(scaled)
    per = np.array([v[grid.block(m)].sum() for m in range(grid.M)])
    return PartWorthFit(v=v, raw=raw, partworths=pw, intercept=float(beta[0]), projection_distance=dist,
                        r2=r2, adjusted_r2=adj, importance=100.0 * per)


def _check_design(X: Array, grid: AttributeGrid) -> None:
    import scipy.linalg as sla

    _, R, piv = sla.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > 1e-10 * d[0])) if d.size else 0
    if rank == X.shape[1]:
        return
    bad = sorted(int(j) - 1 for j in piv[rank:])
    names = []
    for j in bad:
        if j < 0:
            names.append("intercept")
            continue
        m = int(np.searchsorted(grid.offsets, j, side="right") - 1)
        names.append(f"attribute {m + 1} level {j - grid.offsets[m] + 1}")
    raise DesignError("conjoint design is rank deficient; not identified: " + ", ".join(names))


def conjoint_samples(responses, grid: AttributeGrid) -> tuple:
    """One increment vector per focus group; returns ``(SampleSet, fits)``."""
    fits = [conjoint_partworth(r, grid) for r in responses]
    return SampleSet(np.array([f.v for f in fits]), grid), fits


def read_conjoint(path, M: int) -> list:
    """Read ``group, profile, level_1..level_M, response`` rows."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"conjoint file {path} not found")
    groups = OrderedDict()
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or len(header) < 3 + M:
            raise DataError(f"conjoint file {path} needs group, profile, {M} level columns and a response")
        for row in rd:
            if not row:
                continue
            try:
                groups.setdefault(row[0], []).append(([int(v) for v in row[2:2 + M]], float(row[2 + M])))
            except ValueError as exc:
                raise DataError(f"cannot parse conjoint file {path}: {exc}") from exc
    return [ConjointResponse(k, np.array([l for l, _ in rows]), np.array([r for _, r in rows]))
            for k, rows in groups.items()]
