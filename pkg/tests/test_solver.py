import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import Bounds, LinearConstraint, milp

from artifact.errors import ParameterError
from artifact.program import ProgramBuilder
from artifact.solver import SolveOptions, solve_continuous, solve_mixed
from artifact.solver.ipm import conelp

cvxopt = pytest.importorskip("cvxopt")
cvxopt.solvers.options["show_progress"] = False


def random_conic(seed):
    """Feasible, bounded standard-form problem with a few second-order cones."""
    r = np.random.default_rng(seed)
    n = int(r.integers(3, 20))
    l = int(r.integers(n, 2 * n))
    G = np.vstack([r.normal(size=(l, n)), np.eye(n), -np.eye(n)])
    x0 = 0.1 * r.normal(size=n)
    h = G @ x0 + r.uniform(0.1, 1, G.shape[0])
    p = int(r.integers(0, n // 2 + 1))
    A = r.normal(size=(p, n))
    b = A @ x0
    q = [int(r.integers(2, 5)) for _ in range(int(r.integers(0, 3)))]
    Gs, hs = [G], [h]
    for k in q:
        Gk = r.normal(size=(k, n))
        s0 = np.zeros(k)
        s0[0] = 1.0
        s0[1:] = 0.5 * r.normal(size=k - 1) / np.sqrt(k)
        Gs.append(Gk)
        hs.append(Gk @ x0 + s0)
    return r.normal(size=n), np.vstack(Gs), np.concatenate(hs), G.shape[0], q, A, b


@pytest.mark.parametrize("seed", range(12))
def test_ipm_matches_cvxopt(seed):
    c, G, h, l, q, A, b = random_conic(seed)
    res = conelp(c, G, h, l, q, A, b)
    M = cvxopt.matrix
    ref = cvxopt.solvers.conelp(M(c), M(G), M(h), {"l": l, "q": q, "s": []},
                                M(A) if A.size else None, M(b) if A.size else None)
    assert res.status == "optimal" and ref["status"] == "optimal"
    assert res.primal_objective == pytest.approx(ref["primal objective"], abs=1e-6)
    # primal feasibility of the returned point
    s = h - G @ res.x
    assert np.min(s[:l]) >= -1e-7
    off = l
    for k in q:
        assert np.linalg.norm(s[off + 1:off + k]) <= s[off] + 1e-7
        off += k


def test_ipm_certificates():
    r = conelp(np.array([1.0, 1.0]), np.array([[-1.0, 0], [0, -1], [1, 1]]), np.array([0, 0, -1.0]), 3, [])
    assert r.status == "primal_infeasible"
    r = conelp(np.array([-1.0, 0]), np.array([[0, -1.0]]), np.array([0.0]), 1, [])
    assert r.status == "dual_infeasible"


def test_continuous_wrapper_statuses():
    b = ProgramBuilder("max")
    b.add("x", 2, lb=0.0, ub=1.0)
    b.objective({"x": [1.0, 2.0]})
    b.le({"x": [[1.0, 1.0]]}, 1.5)
    sol = solve_continuous(b.build())
    assert sol.status == "optimal" and sol.value == pytest.approx(2.5, abs=1e-7)
    np.testing.assert_allclose(sol.u, [0.5, 1.0], atol=1e-6)
    b = ProgramBuilder("min")
    b.add("x", 1, lb=0.0)
    b.le({"x": [[1.0]]}, -1.0)
    sol = solve_continuous(b.build())
    assert sol.status == "infeasible"
    assert "certificate" in sol.diagnostics


def test_continuous_soc_known_value():
    # max x1 + x2 with ||(x1, x2)|| <= 1: value sqrt 2
    b = ProgramBuilder("max")
    b.add("x", 2)
    b.objective({"x": [1.0, 1.0]})
    b.soc({"x": np.vstack([np.zeros(2), np.eye(2)])}, np.array([1.0, 0, 0]))
    sol = solve_continuous(b.build())
    assert sol.value == pytest.approx(np.sqrt(2), abs=1e-7)


def knapsack(seed, n=10):
    r = np.random.default_rng(seed)
    w = r.integers(10, 100, n).astype(float)
    val = r.uniform(0, 1, n)
    return w, val, float(w.sum() * 0.4)


@pytest.mark.parametrize("seed", range(5))
def test_bnb_knapsack_against_enumeration(seed):
    w, val, cap = knapsack(seed)
    b = ProgramBuilder("max")
    b.add("z", w.size, 0, 1, True)
    b.objective({"z": val})
    b.le({"z": w[None]}, cap)
    sol = solve_mixed(b.build())
    best = max(val @ np.array(zz) for zz in itertools.product([0, 1], repeat=w.size) if w @ np.array(zz) <= cap)
    assert sol.status == "optimal"
    assert sol.value == pytest.approx(best, abs=1e-7)
    assert sol.gap <= 1e-6


@given(st.integers(0, 10 ** 6))
def test_bnb_general_integers_against_highs(seed):
    r = np.random.default_rng(seed)
    n, m = 6, 4
    A = r.uniform(0, 5, (m, n))
    bvec = r.uniform(5, 20, m)
    c = r.normal(size=n)
    b = ProgramBuilder("max")
    b.add("x", n, 0.0, 6.0, integer=[True, True, True, False, False, True])
    b.objective({"x": c})
    b.le({"x": A}, bvec)
    sol = solve_mixed(b.build())
    ref = milp(-c, constraints=LinearConstraint(A, -np.inf, bvec), bounds=Bounds(0, 6),
               integrality=np.array([1, 1, 1, 0, 0, 1]))
    assert sol.value == pytest.approx(-ref.fun, abs=1e-6)


def test_bnb_mixed_soc():
    # max x + y, x integer in [0, 3], x^2 + y^2 <= 5: x = 2, y = 1 gives 3 (x = 1 gives 3 as well)
    b = ProgramBuilder("max")
    b.add("x", 1, 0, 3, True)
    b.add("y", 1)
    b.objective({"x": 1.0, "y": 1.0})
    b.soc({"x": np.array([[0.0], [1.0], [0.0]]), "y": np.array([[0.0], [0.0], [1.0]])},
          np.array([np.sqrt(5), 0, 0]))
    sol = solve_mixed(b.build())
    assert sol.value == pytest.approx(3.0, abs=1e-6)


def test_bnb_infeasible_integer_program():
    b = ProgramBuilder("max")
    b.add("z", 2, 0, 1, True)
    b.objective({"z": [1.0, 1.0]})
    b.eq({"z": [[2.0, 2.0]]}, 1.0)
    assert solve_mixed(b.build()).status == "infeasible"


def test_options_are_validated():
    with pytest.raises(ParameterError):
        SolveOptions(tol=0)
    with pytest.raises(ParameterError):
        SolveOptions(node_limit=0)


def test_node_limit_reports_gap():
    w, val, cap = knapsack(3, n=16)
    b = ProgramBuilder("max")
    b.add("z", w.size, 0, 1, True)
    b.objective({"z": val})
    b.le({"z": w[None]}, cap)
    sol = solve_mixed(b.build(), SolveOptions(node_limit=2))
    assert sol.status == "node-limit"
    # no incumbent yet, but the open nodes still give a finite upper bound
    assert np.isfinite(sol.bound)
    assert sol.bound >= solve_mixed(b.build()).value - 1e-9
