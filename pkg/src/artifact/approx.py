"""Piecewise-linear approximation of general random utilities.

A sampler draws, per realisation, nondecreasing marginal utilities
``U_m: [a_m, b_m] -> R`` normalised so that ``U_m(a_m) = 0`` and
``sum_m U_m(b_m) = 1``.  Discretising at the grid breakpoints gives
increment vectors in the simplex, and the piecewise-linear interpolant
agrees with ``U`` at every breakpoint.  The optimal value changes by at most
``E[L] * Delta`` where ``Delta`` is the widest segment.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import numpy.typing as npt

from .ambiguity import SampleSet, bootstrap_region, build_ellipsoid, compute_moments
from .errors import InvariantError, ParameterError
from .model import AttributeGrid, simplex_region
from .solver import SolveOptions, solve_mixed, solve_robust

Array = npt.NDArray[np.float64]

CHECK_POINTS = 100


@dataclass(frozen=True)
class UtilityDraws:
    """``n`` realisations of the marginal utilities.

    ``values(m, x)`` returns an ``(n, len(x))`` array; ``lipschitz`` has
    shape ``(n, M)``.
    """

    evaluate: Callable
    lipschitz: Array

    @property
    def n(self) -> int:
        return self.lipschitz.shape[0]

    def values(self, m: int, x) -> Array:
        return self.evaluate(m, np.atleast_1d(np.asarray(x, dtype=float)))

    def total_lipschitz(self) -> Array:
        return self.lipschitz.sum(axis=1)


class GeneralUtilitySampler:
    """Base class: subclasses implement :meth:`draw`."""

    lower: Array
    upper: Array

    @property
    def M(self) -> int:
        return self.lower.size

    def draw(self, rng: np.random.Generator, n: int) -> UtilityDraws:
        raise NotImplementedError

    def validate(self, draws: UtilityDraws, tol: float = 1e-9) -> None:
        """Spot-check normalisation, monotonicity and the Lipschitz bounds."""
        total = np.zeros(draws.n)
        for m in range(self.M):
            x = np.linspace(self.lower[m], self.upper[m], CHECK_POINTS)
            U = draws.values(m, x)
            if np.max(np.abs(U[:, 0])) > tol:
                raise InvariantError(f"U_{m + 1}(a) is not zero")
            d = np.diff(U, axis=1)
            if d.min() < -tol:
                raise InvariantError(f"U_{m + 1} is not nondecreasing")
            slope = d / np.diff(x)
            if np.any(slope > draws.lipschitz[:, m:m + 1] * (1 + 1e-9) + tol):
                raise InvariantError(f"U_{m + 1} exceeds its Lipschitz bound")
            total += U[:, -1]
        if np.max(np.abs(total - 1.0)) > 1e-9:
            raise InvariantError("marginal utilities do not sum to one at the upper ends")


class CaraSampler(GeneralUtilitySampler):
    """Exponential utilities with random weights and risk coefficients.

    ``U_m(x) = w_m (1 - exp(-r_m s)) / (1 - exp(-r_m))`` with
    ``s = (x - a_m)/(b_m - a_m)``, ``w ~ Dirichlet(concentration)`` and
    ``r_m ~ Uniform(r_low, r_high)``.
    """

    def __init__(self, M: int, concentration=1.0, r_low: float = 0.5, r_high: float = 3.0,
                 lower=0.0, upper=1.0):
        if not (0 < r_low <= r_high):
            raise ParameterError("risk coefficients must satisfy 0 < r_low <= r_high")
        self.lower = np.broadcast_to(np.asarray(lower, float), (M,)).copy()
        self.upper = np.broadcast_to(np.asarray(upper, float), (M,)).copy()
        self.concentration = np.broadcast_to(np.asarray(concentration, float), (M,)).copy()
        self.r_low, self.r_high = float(r_low), float(r_high)

    def draw(self, rng: np.random.Generator, n: int) -> UtilityDraws:
        w = rng.dirichlet(self.concentration, n)
        r = rng.uniform(self.r_low, self.r_high, (n, self.M))
        span = self.upper - self.lower
        den = -np.expm1(-r)
        lo, sp = self.lower, span

        def evaluate(m, x):
            s = (x - lo[m]) / sp[m]
            return w[:, m:m + 1] * -np.expm1(-r[:, m:m + 1] * s[None, :]) / den[:, m:m + 1]

        L = w * r / (den * span)
        return UtilityDraws(evaluate, L)

    def mean_increments(self, grid: AttributeGrid, quad: int = 64) -> Array:
        """Expected increments by Gauss-Legendre quadrature over ``r``."""
        nodes, wts = np.polynomial.legendre.leggauss(quad)
        r = 0.5 * (self.r_high - self.r_low) * nodes + 0.5 * (self.r_high + self.r_low)
        wts = 0.5 * wts
        Ew = self.concentration / self.concentration.sum()
        out = []
        for m, t in enumerate(grid.breakpoints):
            s = (t - self.lower[m]) / (self.upper[m] - self.lower[m])
            if self.r_high == self.r_low:
                U = -np.expm1(-self.r_low * s) / -np.expm1(-self.r_low)
            else:
                U = wts @ (-np.expm1(-np.outer(r, s)) / -np.expm1(-r)[:, None])
            out.append(Ew[m] * np.diff(U))
        return np.concatenate(out)


class FunctionSampler(GeneralUtilitySampler):
    """The same utilities ``funcs[m]`` on every draw."""

    def __init__(self, funcs: Sequence[Callable], lipschitz: Sequence[float], lower=0.0, upper=1.0):
        M = len(funcs)
        self.funcs = list(funcs)
        self.L = np.asarray(lipschitz, dtype=float)
        self.lower = np.broadcast_to(np.asarray(lower, float), (M,)).copy()
        self.upper = np.broadcast_to(np.asarray(upper, float), (M,)).copy()

    def draw(self, rng: np.random.Generator, n: int) -> UtilityDraws:
        def evaluate(m, x):
            return np.broadcast_to(np.asarray(self.funcs[m](x), float), (n, x.size)).copy()

        return UtilityDraws(evaluate, np.tile(self.L, (n, 1)))


def _check_domain(sampler: GeneralUtilitySampler, grid: AttributeGrid) -> None:
    if grid.M != sampler.M:
        raise ParameterError("grid and sampler disagree on M")
    if np.any(np.abs(grid.lower - sampler.lower) > 1e-12) or np.any(np.abs(grid.upper - sampler.upper) > 1e-12):
        raise ParameterError("grid must span the sampler domains exactly")


def increments_of(draws: UtilityDraws, grid: AttributeGrid) -> Array:
    """``V[n, (m, i)] = U^n_m(t_{m,i}) - U^n_m(t_{m,i-1})``."""
    return np.hstack([np.diff(draws.values(m, t), axis=1) for m, t in enumerate(grid.breakpoints)])


def discretize(sampler: GeneralUtilitySampler, grid: AttributeGrid, N: int, seed: int) -> SampleSet:
    """Draw ``N`` utilities and return their increment vectors on ``grid``."""
    samples, _ = discretize_draws(sampler, grid, N, seed)
    return samples


def discretize_draws(sampler, grid, N: int, seed: int) -> tuple:
    _check_domain(sampler, grid)
    draws = sampler.draw(np.random.default_rng(seed), N)
    sampler.validate(draws)
    V = increments_of(draws, grid)
    V = np.maximum(V, 0.0)
    # normalisation is exact up to rounding; absorb it in the largest entry
    V[np.arange(N), np.argmax(V, axis=1)] += 1.0 - V.sum(axis=1)
    return SampleSet(V, grid), draws


def error_bound(mean_lipschitz: float, grid: AttributeGrid) -> float:
    """``E[L] * Delta`` with ``Delta`` the widest segment of the grid."""
    if mean_lipschitz < 0:
        raise ParameterError("the mean Lipschitz constant must be nonnegative")
    return float(mean_lipschitz) * grid.max_width


# -- reference values ----------------------------------------------------


def _argmax_slope(draws: UtilityDraws, m: int, lam: float, lo: float, hi: float, iters: int = 80) -> float:
    """Largest ``x`` in ``[lo, hi]`` where the mean marginal slope is at least ``lam``."""
    h = 1e-7 * (hi - lo)

    def slope(x):
        a, b = max(lo, x - h), min(hi, x + h)
        return float(np.mean(draws.values(m, np.array([a, b])) @ np.array([-1.0, 1.0]))) / (b - a)

    if slope(lo) <= lam:
        return lo
    if slope(hi) >= lam:
        return hi
    a, b = lo, hi
    for _ in range(iters):
        c = 0.5 * (a + b)
        if slope(c) > lam:
            a = c
        else:
            b = c
    return 0.5 * (a + b)


def simplex_value(draws: UtilityDraws, lower, upper, iters: int = 80) -> tuple:
    """``max sum_m mean_n U^n_m(x_m)`` over ``{x >= 0, sum x = 1}`` in the box.

    Requires concave marginals (true for the CARA family); solved by
    bisection on the common marginal slope.  Returns ``(value, x)``.
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    M = lower.size
    lo_b, hi_b = np.maximum(lower, 0.0), np.minimum(upper, 1.0)
    if lo_b.sum() > 1 + 1e-12 or hi_b.sum() < 1 - 1e-12:
        raise ParameterError("the simplex does not meet the box")

    def alloc(lam):
        return np.array([_argmax_slope(draws, m, lam, lo_b[m], hi_b[m]) for m in range(M)])

    top = max(float(np.max(draws.lipschitz)) * 2.0, 1.0)
    a, b = 0.0, top
    for _ in range(iters):
        c = 0.5 * (a + b)
        if alloc(c).sum() > 1.0:
            a = c
        else:
            b = c
    xa, xb = alloc(a), alloc(b)
    sa, sb = xa.sum(), xb.sum()
    theta = 1.0 if sa == sb else (1.0 - sb) / (sa - sb)
    x = theta * xa + (1 - theta) * xb
    value = sum(float(np.mean(draws.values(m, x[m:m + 1]))) for m in range(M))
    return value, x


def saa_value(grid: AttributeGrid, samples: SampleSet, region=None, opts: SolveOptions = SolveOptions()) -> float:
    """``max_x V_bar' f(x)`` over the region (simplex by default)."""
    from .reformulate import build_saa

    region = region or simplex_region(grid.M)
    sol = solve_mixed(build_saa(grid, samples.data.mean(axis=0), region), opts)
    return sol.value


# -- experiments ---------------------------------------------------------

REPORT_COLUMNS = ("I", "N", "param", "value", "reference", "abs_gap", "bound")


def approximation_experiment(sampler: GeneralUtilitySampler, grids: Sequence[AttributeGrid], N: int,
                             seed: int, opts: SolveOptions = SolveOptions()) -> list:
    """Discretisation error against the continuous optimum on the same draws.

    Every grid sees the same ``N`` draws, so the rows isolate the effect of
    the segment width.
    """
    rows = []
    draws = sampler.draw(np.random.default_rng(seed), N)
    sampler.validate(draws)
    ref, _ = simplex_value(draws, sampler.lower, sampler.upper)
    EL = float(np.mean(draws.total_lipschitz()))
    for grid in grids:
        _check_domain(sampler, grid)
        V = increments_of(draws, grid)
        V = np.maximum(V, 0.0)
        V[np.arange(N), np.argmax(V, axis=1)] += 1.0 - V.sum(axis=1)
        val = saa_value(grid, SampleSet(V, grid), opts=opts)
        rows.append(dict(I=grid.I, N=N, param=grid.max_width, value=val, reference=ref,
                         abs_gap=abs(val - ref), bound=error_bound(EL, grid)))
    return rows


def convergence_experiment(sampler: GeneralUtilitySampler, grids: Sequence[AttributeGrid], Ns: Sequence[int],
                           kind: str, params: Optional[dict] = None, seed: int = 0,
                           opts: SolveOptions = SolveOptions()) -> list:
    """Robust values on growing grids and samples against the finest SAA value.

    ``kind`` is ``saa``, ``ellipsoid`` (``gamma = params['c'] / N``) or
    ``bootstrap`` (``params['alpha']`` and ``params['K']`` fixed).  Each
    cell ``(g, n)`` draws with the seed ``(seed, g, n)``.
    """
    params = dict(params or {})
    if kind not in ("saa", "ellipsoid", "bootstrap"):
        raise ParameterError(f"unknown kind {kind!r}")
    if list(Ns) != sorted(Ns) or [g.I for g in grids] != sorted(g.I for g in grids):
        raise ParameterError("grids and Ns must be increasing")
    region = simplex_region(grids[0].M)
    gi_ref, ni_ref = len(grids) - 1, len(Ns) - 1
    ref_samples, _ = discretize_draws(sampler, grids[gi_ref], Ns[ni_ref], [seed, gi_ref, ni_ref])
    ref = saa_value(grids[gi_ref], ref_samples, opts=opts)
    rows = []
    for gi, grid in enumerate(grids):
        for ni, N in enumerate(Ns):
            samples, draws = discretize_draws(sampler, grid, N, [seed, gi, ni])
            EL = float(np.mean(draws.total_lipschitz()))
            if kind == "saa":
                p, val = 0.0, saa_value(grid, samples, opts=opts)
            else:
                mom = compute_moments(samples, grid)
                if kind == "ellipsoid":
                    p = params.get("c", 1.0) / N
                    amb = build_ellipsoid(mom, p)
                else:
                    p = params.get("alpha", 0.1)
                    amb = bootstrap_region(samples, params.get("K", 200), p,
                                           seed=params.get("boot_seed", seed), moments=mom)
                val = solve_robust(grid, amb, region, opts=opts).value
            rows.append(dict(I=grid.I, N=N, param=p, value=val, reference=ref, abs_gap=abs(val - ref),
                             bound=error_bound(EL, grid)))
    return rows


def write_report(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(r[k])) if k not in ("I", "N") else int(r[k])) for k in REPORT_COLUMNS})
