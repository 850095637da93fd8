import numpy as np
import pytest

from artifact import ambiguity as am
from artifact.errors import ModelError
from artifact.model import AttributeGrid, marginal_values, simplex_region
from artifact.solver import SolveOptions, cutting_surface, extract_worst_case, solve_robust


@pytest.fixture
def setup():
    grid = AttributeGrid.uniform([2, 3, 2])
    X = np.random.default_rng(2).dirichlet(np.ones(grid.I), 40)
    return grid, am.compute_moments(X, grid), X


@pytest.mark.parametrize("gamma", [1e-3, 0.2, 1.0])
def test_cutting_matches_direct(setup, gamma):
    grid, m, _ = setup
    E = am.build_ellipsoid(m, gamma)
    a = solve_robust(grid, E, simplex_region(3))
    b = solve_robust(grid, E, simplex_region(3), method="cutting")
    assert b.status == "optimal"
    assert b.value == pytest.approx(a.value, abs=1e-5)


def test_history_sandwiches_the_value(setup):
    grid, m, _ = setup
    E = am.build_ellipsoid(m, 0.3)
    ref = solve_robust(grid, E, simplex_region(3)).value
    sol = cutting_surface(grid, E, simplex_region(3), SolveOptions(delta=1e-7))
    ups = [h["t"] for h in sol.history]
    for h in sol.history:
        assert h["theta"] <= ref + 1e-6 <= h["t"] + 2e-6
    # the master bound can only fall as cuts accumulate
    assert all(b <= a + 1e-7 for a, b in zip(ups, ups[1:]))
    assert sol.bound - sol.value <= 1e-7


def test_cutting_needs_ellipsoid(setup):
    grid, m, X = setup
    R = am.bootstrap_region(X, 50, 0.2, seed=0, directions=100, moments=m)
    with pytest.raises(ModelError):
        solve_robust(grid, R, simplex_region(3), method="cutting")
    with pytest.raises(ModelError):
        solve_robust(grid, R, simplex_region(3), method="simplex")


def test_worst_case_lies_in_the_set(setup):
    grid, m, _ = setup
    E = am.build_ellipsoid(m, 0.3)
    sol = solve_robust(grid, E, simplex_region(3))
    wc = extract_worst_case(grid, sol, E)
    v = wc.v
    assert v.min() >= -1e-8 and v.sum() == pytest.approx(1.0, abs=1e-8)
    r = E.whitening @ (v[:-1] - E.center)
    assert r @ r <= E.gamma * (1 + 1e-6)
    assert wc.value == pytest.approx(sol.value, abs=1e-6)
    for U, mv in zip(wc.marginals, marginal_values(grid, v)):
        np.testing.assert_allclose(U, mv)
