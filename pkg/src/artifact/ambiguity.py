"""Ambiguity sets for the mean of the increment vector.

Two constructions are offered.  The ellipsoidal set bounds the whitened
distance between the reduced mean ``C E[V]`` and the sample mean; the
bootstrap set is the percentile-t confidence region spanned by the deepest
studentised resample statistics.  Both work in reduced coordinates (the last
increment is dropped because the increments sum to one).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import numpy.typing as npt

from .errors import DataError, DegeneracyError, InvariantError, ModelError, ParameterError
from .model import AttributeGrid, assemble_block_matrices, is_concave, NEG_TOL, SUM_TOL

Array = npt.NDArray[np.float64]

SUPPORTS = ("V", "VC")
RANK_TOL = 1e-10
COND_LIMIT = 1e10
GAMMA_ALPHA_MAX = math.exp(-2) * (2 - math.exp(-2))


def _check_support(support: str) -> str:
    if support not in SUPPORTS:
        raise ParameterError(f"support must be one of {SUPPORTS}, got {support!r}")
    return support


@dataclass(frozen=True)
class SampleSet:
    """``N`` increment vectors stored row-wise."""

    data: Array
    grid: Optional[AttributeGrid] = None

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if data.shape[0] < 2:
            raise DataError("a sample needs at least two rows")
        if self.grid is not None and data.shape[1] != self.grid.I:
            raise DataError(f"sample has {data.shape[1]} columns, grid has I = {self.grid.I}")
        if not np.all(np.isfinite(data)):
            raise InvariantError("sample contains non-finite values")
        if data.min() < NEG_TOL or np.max(np.abs(data.sum(axis=1) - 1.0)) > SUM_TOL:
            bad = int(np.argmax((data.min(axis=1) < NEG_TOL) | (np.abs(data.sum(axis=1) - 1) > SUM_TOL)))
            raise InvariantError(f"sample row {bad} is not in the simplex")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def N(self) -> int:
        return self.data.shape[0]

    @property
    def I(self) -> int:
        return self.data.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"v{i + 1}" for i in range(self.I)])
            for row in self.data:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, grid: Optional[AttributeGrid] = None) -> "SampleSet":
        """Read a matrix CSV (header + N rows) or a long CSV ``sample,m,i,value``."""
        path = Path(path)
        if not path.exists():
            raise DataError(f"sample file {path} not found")
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise DataError(f"sample file {path} is empty")
        header = [h.strip().lower() for h in rows[0]]
        try:
            if header[:4] == ["sample", "m", "i", "value"]:
                if grid is None:
                    raise DataError("long-format samples need the grid to place blocks")
                recs = [(int(r[0]), int(r[1]), int(r[2]), float(r[3])) for r in rows[1:] if r]
                ids = sorted({r[0] for r in recs})
                pos = {k: j for j, k in enumerate(ids)}
                data = np.full((len(ids), grid.I), np.nan)
                off = grid.offsets
                for n, m, i, val in recs:
                    data[pos[n], off[m - 1] + i - 1] = val
                if np.isnan(data).any():
                    raise DataError("long-format sample has missing (m, i) entries")
            else:
                data = np.array([[float(v) for v in r] for r in rows[1:] if r])
        except (ValueError, IndexError) as exc:
            raise DataError(f"cannot parse sample file {path}: {exc}") from exc
        return cls(data, grid)


@dataclass(frozen=True)
class Moments:
    """Sample mean and covariance with their reduced (last entry dropped) forms."""

    mean: Array
    cov: Array
    N: int
    reduced_mean: Array
    reduced_cov: Array
    sqrt: Array
    inv_sqrt: Array
    ridge: float = 0.0
    grid: Optional[AttributeGrid] = None

    @property
    def I(self) -> int:
        return self.mean.size

    @property
    def whitening_norm(self) -> float:
        """Spectral norm of ``S^{-1/2}`` (the sample proxy for ``R``)."""
        return float(np.linalg.norm(self.inv_sqrt, 2))


def _sym_sqrt(S: Array) -> tuple:
    w, U = np.linalg.eigh(S)
    w = np.maximum(w, 0.0)
    rt = np.sqrt(w)
    return (U * rt) @ U.T, (U / rt) @ U.T


def moments_from(mean, cov, N: int, grid: Optional[AttributeGrid] = None) -> Moments:
    """Moments from a given mean and covariance (e.g. a reference mean)."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    I = mean.size
    if cov.shape != (I, I):
        raise DataError("covariance shape does not match the mean")
    S = cov[:-1, :-1]
    S = 0.5 * (S + S.T)
    w = np.linalg.eigvalsh(S)
    top = float(w[-1]) if w.size else 0.0
    if top <= 0.0:
        raise DegeneracyError("reduced covariance is zero: the sample has no spread")
    rank = int(np.sum(w > RANK_TOL * top))
    if rank < I - 1:
        raise DegeneracyError(
            f"reduced covariance has rank {rank} < {I - 1}; collect more samples (N > I) "
            "or merge breakpoints to reduce the dimension"
        )
    ridge = 0.0
    if w[0] < top / COND_LIMIT:
        ridge = 1e-8 * float(np.trace(S)) / (I - 1)
        S = S + ridge * np.eye(I - 1)
    rt, irt = _sym_sqrt(S)
    return Moments(mean=mean, cov=cov, N=int(N), reduced_mean=mean[:-1].copy(), reduced_cov=S,
                   sqrt=rt, inv_sqrt=irt, ridge=ridge, grid=grid)


def compute_moments(samples, grid: Optional[AttributeGrid] = None, mean=None) -> Moments:
    """Mean, unbiased covariance and the symmetric square roots of ``S_<-I>``.

    ``mean`` overrides the sample mean (the covariance is still taken about
    the sample's own mean).
    """
    if not isinstance(samples, SampleSet):
        samples = SampleSet(samples, grid)
    grid = grid or samples.grid
    X = samples.data
    cov = np.cov(X, rowvar=False, ddof=1)
    mu = X.mean(axis=0) if mean is None else np.asarray(mean, dtype=float)
    if mu.shape != (X.shape[1],):
        raise DataError("mean override has the wrong length")
    return moments_from(mu, cov, samples.N, grid)


def gamma_from_confidence(alpha: float, N: int, moments: Optional[Moments] = None,
                          R: Optional[float] = None) -> float:
    """Radius ``32 R^2 e^2 ln^2(1/(1 - sqrt(1 - alpha))) / N``.

    ``R`` defaults to the spectral norm of the sample ``S^{-1/2}``; that is a
    plug-in proxy for the population quantity.
    """
    if not (0.0 < alpha < GAMMA_ALPHA_MAX):
        raise ParameterError(f"alpha must lie in (0, {GAMMA_ALPHA_MAX:.6f}), got {alpha}")
    if N < 1:
        raise ParameterError("N must be positive")
    if R is None:
        if moments is None:
            raise ParameterError("either moments or R is required")
        R = moments.whitening_norm
    lg = math.log(1.0 / (1.0 - math.sqrt(1.0 - alpha)))
    return 32.0 * R * R * math.e ** 2 * lg * lg / N


@dataclass(frozen=True)
class EllipsoidSet:
    """``{P : ||S^{-1/2}(C E_P[V] - center)||^2 <= gamma}`` on support ``V`` or ``VC``."""

    center: Array
    whitening: Array
    gamma: float
    support: str
    moments: Moments
    calibration: dict = field(default_factory=dict)

    kind = "ellipsoid"

    @property
    def I(self) -> int:
        return self.center.size + 1


def build_ellipsoid(moments: Moments, gamma: float, support: str = "V",
                    grid: Optional[AttributeGrid] = None, calibration: Optional[dict] = None) -> EllipsoidSet:
    """Ellipsoidal set; ``gamma = 0`` (the sample-average limit) is rejected."""
    _check_support(support)
    if not (gamma > 0 and np.isfinite(gamma)):
        raise ParameterError("gamma must be positive; use the sample-average path for gamma = 0")
    grid = grid or moments.grid
    out = EllipsoidSet(center=moments.reduced_mean, whitening=moments.inv_sqrt, gamma=float(gamma),
                       support=support, moments=moments, calibration=dict(calibration or {}))
    if support == "VC":
        if grid is None:
            raise ModelError("concave support needs the grid")
        if not is_concave(grid, moments.mean):
            # the centre is not concave; make sure the set still meets VC
            from .reformulate import build_inner

            prob = build_inner(grid, None, out, features=np.zeros(grid.I))
            try:
                prob.solve()
            except ModelError:
                raise ModelError("the ellipsoid does not meet the concave support set") from None
    return out


def calibrate_ellipsoid(moments: Moments, alpha: float, support: str = "V",
                        grid: Optional[AttributeGrid] = None) -> EllipsoidSet:
    R = moments.whitening_norm
    g = gamma_from_confidence(alpha, moments.N, R=R)
    return build_ellipsoid(moments, g, support, grid,
                           calibration=dict(alpha=alpha, R=R, sample_proxy=True))


# -- Tukey depth ---------------------------------------------------------


def _depth_1d(points: Array, query: Array) -> Array:
    s = np.sort(points)
    le = np.searchsorted(s, query, side="right")
    ge = s.size - np.searchsorted(s, query, side="left")
    return np.minimum(le, ge) / s.size


def _depth_2d(points: Array, query: Array) -> float:
    d = points - query
    same = np.all(np.abs(d) <= 1e-14 * max(1.0, float(np.max(np.abs(points)))), axis=1)
    k_same = int(same.sum())
    d = d[~same]
    if d.shape[0] == 0:
        return k_same / points.shape[0]
    th = np.sort(np.arctan2(d[:, 1], d[:, 0]))
    th2 = np.concatenate([th, th + 2 * np.pi])
    # half-planes through the query whose boundary has just passed a point
    upper = np.searchsorted(th2, th + np.pi * (1 + 1e-15), side="right")
    lower = np.searchsorted(th2, th, side="right")
    count = upper - lower
    return (int(count.min()) + k_same) / points.shape[0]


def _directions(p: int, count: int, rng: np.random.Generator) -> Array:
    U = rng.standard_normal((count, p))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def _depth_projection(points: Array, queries: Array, U: Array, chunk: int = 128) -> Array:
    K = points.shape[0]
    best = np.full(queries.shape[0], K, dtype=np.int64)
    for s0 in range(0, U.shape[0], chunk):
        Ub = U[s0:s0 + chunk]
        P = np.sort(points @ Ub.T, axis=0)
        Q = queries @ Ub.T
        for j in range(Ub.shape[0]):
            le = np.searchsorted(P[:, j], Q[:, j], side="right")
            ge = K - np.searchsorted(P[:, j], Q[:, j], side="left")
            best = np.minimum(best, np.minimum(le, ge))
    return best / K


def tukey_depth(points, query, directions: int = 1000, seed: int = 0) -> float:
    """Halfspace depth of ``query`` in the empirical distribution of ``points``.

    Exact in one and two dimensions; otherwise the minimum over ``directions``
    random unit vectors (and their negatives), which upper-bounds the depth.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    q = np.atleast_1d(np.asarray(query, dtype=float))
    if P.shape[0] == 0:
        raise DataError("depth needs at least one point")
    p = P.shape[1]
    if p == 1:
        return float(_depth_1d(P[:, 0], q)[0])
    if p == 2:
        return _depth_2d(P, q)
    U = _directions(p, directions, np.random.default_rng(seed))
    return float(_depth_projection(P, q[None, :], U)[0])


def depth_ranks(points, directions: int = 1000, seed: int = 0) -> Array:
    """Depth of every point within the set itself (self-inclusive)."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    p = P.shape[1]
    if p == 1:
        return _depth_1d(P[:, 0], P[:, 0])
    if p == 2:
        return np.array([_depth_2d(P, P[k]) for k in range(P.shape[0])])
    U = _directions(p, directions, np.random.default_rng(seed))
    return _depth_projection(P, P, U)


# -- bootstrap -----------------------------------------------------------


def retained_count(alpha: float, K: int) -> int:
    return int(min(max(math.ceil((1.0 - alpha) * K - 1e-9), 1), K))


@dataclass(frozen=True)
class BootstrapStatistics:
    """Studentised resample statistics ``T*_k`` (rows) with their depths."""

    T: Array
    depths: Array
    order: np.ndarray
    moments: Moments
    seed: int
    redraws: int = 0

    @property
    def K(self) -> int:
        return self.T.shape[0]

    def region(self, alpha: float, support: str = "V") -> "BootstrapRegion":
        if not (0.0 <= alpha < 1.0):
            raise ParameterError("alpha must lie in [0, 1)")
        L = retained_count(alpha, self.K)
        cols = self.order[:L]
        return BootstrapRegion(T_hat=self.T[cols].T.copy(), N=self.moments.N, K=self.K, alpha=alpha,
                               moments=self.moments, support=_check_support(support),
                               columns=cols.copy())


def bootstrap_statistics(samples, K: int, seed: int, directions: int = 1000,
                         moments: Optional[Moments] = None) -> BootstrapStatistics:
    """Draw ``K`` resamples and rank their studentised means by depth."""
    if not isinstance(samples, SampleSet):
        samples = SampleSet(samples)
    X = samples.data
    N, I = X.shape
    if K < 1:
        raise ParameterError("K must be positive")
    moments = moments or compute_moments(samples)
    center = X.mean(axis=0)[:-1]
    p = I - 1
    T = np.empty((K, p))
    redraws = 0
    batch = 256
    for k0 in range(0, K, batch):
        ks = range(k0, min(K, k0 + batch))
        idx = np.stack([np.random.default_rng([seed, 0, k]).integers(0, N, N) for k in ks])
        R = X[idx][:, :, :-1]
        means = R.mean(axis=1)
        dev = R - means[:, None, :]
        covs = np.einsum("kni,knj->kij", dev, dev) / (N - 1)
        for j, k in enumerate(ks):
            stat = _studentise(covs[j], means[j], center, N)
            attempt = 0
            while stat is None:
                redraws += 1
                attempt += 1
                if redraws > 10 * K:
                    raise DegeneracyError("too many singular bootstrap resamples")
                Rk = X[np.random.default_rng([seed, 1, k, attempt]).integers(0, N, N)][:, :-1]
                stat = _studentise(np.cov(Rk, rowvar=False, ddof=1).reshape(p, p), Rk.mean(axis=0),
                                   center, N)
            T[k] = stat
    depths = depth_ranks(T, directions, seed=int(np.random.default_rng([seed, 2]).integers(2 ** 31)))
    order = np.argsort(-depths, kind="stable")
    return BootstrapStatistics(T=T, depths=depths, order=order, moments=moments, seed=seed,
                               redraws=redraws)


def _studentise(S: Array, mean: Array, center: Array, N: int):
    p = S.shape[0]
    w, U = np.linalg.eigh(S)
    top = w[-1]
    if not top > 0:
        return None
    if w[0] <= 1e-12 * top:
        S = S + 1e-8 * np.trace(S) / p * np.eye(p)
        w, U = np.linalg.eigh(S)
        if w[0] <= 1e-12 * w[-1]:
            return None
    irt = (U / np.sqrt(w)) @ U.T
    return np.sqrt(N) * irt @ (mean - center)


@dataclass(frozen=True)
class BootstrapRegion:
    """Retained statistics ``T_hat`` (columns) spanning the confidence region."""

    T_hat: Array
    N: int
    K: int
    alpha: float
    moments: Moments
    support: str = "V"
    columns: Optional[np.ndarray] = None

    kind = "bootstrap"

    def __post_init__(self):
        if self.T_hat.ndim != 2 or self.T_hat.shape[1] < 1:
            raise ModelError("a bootstrap region needs at least one retained statistic")
        if self.T_hat.shape[0] != self.moments.I - 1:
            raise ModelError("retained statistics have the wrong dimension")

    @property
    def I(self) -> int:
        return self.moments.I

    @property
    def vertices(self) -> Array:
        """Points of the reduced-mean region, one column per retained statistic."""
        m = self.moments
        return m.reduced_mean[:, None] - m.sqrt @ self.T_hat / math.sqrt(self.N)

    @classmethod
    def from_statistics(cls, moments: Moments, T_hat, support: str = "V", alpha: float = 0.0):
        T_hat = np.atleast_2d(np.asarray(T_hat, dtype=float))
        return cls(T_hat=T_hat, N=moments.N, K=T_hat.shape[1], alpha=alpha, moments=moments,
                   support=_check_support(support))

    def contains(self, reduced_mean, tol: float = 1e-7) -> bool:
        """Whether ``reduced_mean`` lies in the convex hull of :attr:`vertices`."""
        return self.distance(reduced_mean) <= tol

    def distance(self, reduced_mean) -> float:
        """Smallest max-norm residual of a convex combination of the vertices."""
        from .program import ProgramBuilder
        from .solver import solve_continuous

        V = self.vertices
        mu = np.asarray(reduced_mean, dtype=float)
        p, L = V.shape
        b = ProgramBuilder("min")
        b.add("w", L, lb=0.0)
        b.add("t", 1, lb=0.0)
        b.objective({"t": 1.0})
        b.eq({"w": np.ones((1, L))}, 1.0)
        b.le({"w": V, "t": -np.ones((p, 1))}, mu)
        b.le({"w": -V, "t": -np.ones((p, 1))}, -mu)
        sol = solve_continuous(b.build())
        return float(sol.value)


def bootstrap_region(samples, K: int, alpha: float, seed: int, directions: int = 1000,
                     moments: Optional[Moments] = None, support: str = "V") -> BootstrapRegion:
    """Confidence region from the ``ceil((1 - alpha) K)`` deepest statistics."""
    stats = bootstrap_statistics(samples, K, seed, directions, moments)
    return stats.region(alpha, support)


# -- feasible mean sets --------------------------------------------------


@dataclass(frozen=True)
class MeanSet:
    """Explicit constraints on ``(v, w)`` describing the feasible means.

    Rows are ``A_v v + A_w w = b`` (equalities) and ``G_v v <= g``
    (inequalities); ``soc`` holds ``(F, f)`` with ``F v + f`` in a
    second-order cone.  ``v`` and ``w`` are nonnegative.
    """

    I: int
    n_w: int
    A_v: Array
    A_w: Array
    b: Array
    G_v: Array
    g: Array
    soc: tuple


def feasible_mean_set(region, grid: Optional[AttributeGrid] = None) -> MeanSet:
    """Linear/conic description of the means allowed by ``region``."""
    I = region.I
    m = region.moments
    support = region.support
    grid = grid or m.grid
    if support == "VC":
        if grid is None:
            raise ModelError("concave support needs the grid")
        A = assemble_block_matrices(grid).A
        G_v, g = -A, np.zeros(A.shape[0])
    else:
        G_v, g = np.zeros((0, I)), np.zeros(0)
    C = np.eye(I)[:-1]
    if region.kind == "ellipsoid":
        Q = region.whitening
        F = np.vstack([np.zeros((1, I)), Q @ C])
        f = np.concatenate([[math.sqrt(region.gamma)], -Q @ region.center])
        return MeanSet(I=I, n_w=0, A_v=np.ones((1, I)), A_w=np.zeros((1, 0)), b=np.ones(1),
                       G_v=G_v, g=g, soc=((F, f),))
    T = region.T_hat
    L = T.shape[1]
    A_v = np.vstack([C, np.ones((1, I)), np.zeros((1, I))])
    A_w = np.vstack([m.sqrt @ T / math.sqrt(region.N), np.zeros((1, L)), np.ones((1, L))])
    b = np.concatenate([m.reduced_mean, [1.0, 1.0]])
    return MeanSet(I=I, n_w=L, A_v=A_v, A_w=A_w, b=b, G_v=G_v, g=g, soc=())
