import numpy as np
import pytest
from hypothesis import given, strategies as st

from artifact.errors import DomainError, InvariantError, ModelError
from artifact.model import (
    ActionMapped,
    AttributeGrid,
    Polyhedron,
    assemble_block_matrices,
    encode_segment_selection,
    eval_utility,
    feature_map,
    is_concave,
    marginal_values,
    project_simplex,
    simplex_region,
    validate_increments,
)

from conftest import COMPARATIVE_BREAKPOINTS, COMPARATIVE_MEAN


@st.composite
def grids(draw, max_attrs=4, max_segments=5):
    M = draw(st.integers(1, max_attrs))
    bps = []
    for _ in range(M):
        k = draw(st.integers(1, max_segments))
        lo = draw(st.floats(-5, 5))
        gaps = draw(st.lists(st.floats(0.01, 3.0), min_size=k, max_size=k))
        bps.append(lo + np.concatenate([[0.0], np.cumsum(gaps)]))
    if sum(len(t) - 1 for t in bps) < 2:
        bps.append(np.array([0.0, 0.5, 1.0]))
    return AttributeGrid(tuple(bps))


@st.composite
def grid_point_increments(draw):
    g = draw(grids())
    u = draw(st.lists(st.floats(0, 1), min_size=g.M, max_size=g.M))
    x = g.lower + np.array(u) * (g.upper - g.lower)
    w = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=g.I, max_size=g.I))) + 1e-3
    return g, x, w / w.sum()


def interp_utility(grid, v, x):
    """Reference: linear interpolation of the cumulative breakpoint utilities."""
    U = marginal_values(grid, v)
    return sum(np.interp(x[m], grid.breakpoints[m], U[m]) for m in range(grid.M))


def test_grid_basics():
    g = AttributeGrid.uniform([2, 3])
    assert g.M == 2 and g.I == 5 and g.sizes == (2, 3)
    assert list(g.offsets) == [0, 2, 5]
    assert g.block(1) == slice(2, 5)
    assert g.max_width == pytest.approx(0.5)
    with pytest.raises(ModelError):
        AttributeGrid((np.array([0.0, 1.0]),))
    with pytest.raises(ModelError):
        AttributeGrid((np.array([0.0, 0.5, 0.5]),))


def test_grid_arrays_are_read_only():
    g = AttributeGrid.uniform([2, 2])
    with pytest.raises(ValueError):
        g.breakpoints[0][0] = 3.0


def test_anchor_utility_value(grid3):
    # frozen after cross-checking against np.interp of the breakpoint utilities
    x = np.array([0.0667, 0.7333, 0.2])
    assert eval_utility(grid3, COMPARATIVE_MEAN, x) == pytest.approx(0.53667264, abs=1e-12)
    assert interp_utility(grid3, COMPARATIVE_MEAN, x) == pytest.approx(0.53667264, abs=1e-12)


def test_feature_map_midpoints(grid3):
    f = feature_map(grid3, np.array([0.5, 0.5, 0.5]))
    np.testing.assert_allclose(f[:4], [1, 1, (0.5 - 0.4) / (0.6667 - 0.4), 0])
    np.testing.assert_allclose(f[4:10], [1, 1, 1, 1, 0, 0])
    np.testing.assert_allclose(f[10:], [1, 1, (0.5 - 0.2) / (0.5333 - 0.2), 0, 0])


def test_breakpoint_belongs_to_left_segment():
    g = AttributeGrid.uniform([2])
    y, z = encode_segment_selection(g, np.array([0.5]))
    assert list(z) == [1, 0]
    y, z = encode_segment_selection(g, np.array([0.0]))
    assert list(z) == [1, 0]


def test_domain_errors_and_clamp():
    g = AttributeGrid.uniform([2, 2])
    v = np.full(4, 0.25)
    with pytest.raises(DomainError):
        feature_map(g, np.array([1.5, 0.2]))
    with pytest.raises(DomainError):
        eval_utility(g, v, np.array([0.2]))
    np.testing.assert_allclose(feature_map(g, np.array([1.5, -1.0]), clamp=True), [1, 1, 0, 0])
    assert eval_utility(g, v, np.array([1.5, -1.0]), clamp=True) == pytest.approx(0.5)


def test_validate_increments():
    g = AttributeGrid.uniform([2, 2])
    validate_increments(g, np.full(4, 0.25))
    with pytest.raises(InvariantError):
        validate_increments(g, np.array([0.5, 0.5, 0.5, -0.5]))
    with pytest.raises(InvariantError):
        validate_increments(g, np.full(4, 0.3))
    with pytest.raises(InvariantError):
        validate_increments(g, np.array([0.1, 0.4, 0.25, 0.25]), concave=True)


def test_block_matrices_shapes(grid3):
    B = assemble_block_matrices(grid3)
    I, M = grid3.I, grid3.M
    assert B.A.shape == (I - M, I)
    assert B.C.shape == (I - 1, I)
    assert B.Y.shape == B.Z.shape == B.B.shape == (I, I)
    assert B.D.shape == B.E.shape == (I, M)


def test_concavity_matrix_matches_slope_test(grid3, rng):
    A = assemble_block_matrices(grid3).A
    for _ in range(50):
        v = rng.dirichlet(np.ones(grid3.I))
        assert is_concave(grid3, v) == bool(np.all(A @ v >= -1e-10))


def test_segment_rows_hold(grid3, rng):
    # lo z <= y <= hi z row by row, sum of z per attribute is one
    B = assemble_block_matrices(grid3)
    for _ in range(100):
        x = rng.uniform(0, 1, 3)
        y, z = encode_segment_selection(grid3, x)
        assert np.all(B.H_minus @ z <= y + 1e-15) and np.all(y <= B.H_plus @ z + 1e-15)
        np.testing.assert_array_equal(B.E.T @ z, np.ones(3))
        np.testing.assert_allclose(B.E.T @ y, x)


def test_project_simplex():
    p, d = project_simplex(np.array([0.5, 0.5, 0.5]))
    np.testing.assert_allclose(p, np.full(3, 1 / 3))
    assert d == pytest.approx(np.sqrt(3) * (0.5 - 1 / 3))
    p, d = project_simplex(np.array([0.2, 0.8]))
    assert d == 0.0


def test_polyhedron_and_actions():
    g = AttributeGrid.uniform([2, 2])
    P = simplex_region(2)
    assert P.contains(g, [0.3, 0.7]) and not P.contains(g, [0.3, 0.3])
    with pytest.raises(ModelError):
        ActionMapped(np.zeros(2), np.ones((2, 1)), ("integer",), [0.0], [np.inf])
    R = ActionMapped(np.zeros(2), np.eye(2), ("binary", "continuous"), [0, 0], [5, 1],
                     A_in=[[1, 1]], b_in=[1.5])
    assert R.upper[0] == 1.0
    assert R.contains([1, 0.5]) and not R.contains([0.5, 0.5]) and not R.contains([1, 0.8])
    lo, hi = R.interval_bounds()
    np.testing.assert_allclose(lo, [[0, 0]])
    np.testing.assert_allclose(hi, [[1, 1]])
    assert isinstance(Polyhedron(2), Polyhedron)


@given(grid_point_increments())
def test_feature_map_matches_interpolation(case):
    g, x, v = case
    assert v @ feature_map(g, x) == pytest.approx(interp_utility(g, v, x), abs=1e-10)
    assert eval_utility(g, v, x) == pytest.approx(interp_utility(g, v, x), abs=1e-10)


@given(grid_point_increments())
def test_encoding_reproduces_features(case):
    g, x, _ = case
    B = assemble_block_matrices(g)
    y, z = encode_segment_selection(g, x)
    np.testing.assert_allclose(B.Y @ y + B.Z @ z, feature_map(g, x), atol=1e-12)


@given(grid_point_increments())
def test_utility_is_monotone_and_bounded(case):
    g, x, v = case
    u = eval_utility(g, v, x)
    assert -1e-12 <= u <= 1 + 1e-12
    bump = x.copy()
    bump[0] = min(g.upper[0], x[0] + 0.1)
    assert eval_utility(g, v, bump) >= u - 1e-12
    assert eval_utility(g, v, g.lower) == pytest.approx(0.0, abs=1e-12)
    assert eval_utility(g, v, g.upper) == pytest.approx(1.0, abs=1e-12)


@given(grids(), st.integers(0, 2 ** 31))
def test_features_in_unit_box_and_monotone_in_segment(g, seed):
    r = np.random.default_rng(seed)
    x = r.uniform(g.lower, g.upper)
    f = feature_map(g, x)
    assert np.all(f >= -1e-12) and np.all(f <= 1 + 1e-12)
    for blk in g.split(f):
        # a block is 1..1, one fraction, then 0..0
        assert np.all(np.diff(blk) <= 1e-12)
        assert np.sum((blk > 1e-12) & (blk < 1 - 1e-12)) <= 1


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=12))
def test_projection_is_optimal(vals):
    v = np.array(vals)
    p, d = project_simplex(v)
    assert p.min() >= 0 and p.sum() == pytest.approx(1.0)
    assert d == pytest.approx(np.linalg.norm(p - v))
    # optimality: (v - p) . (q - p) <= 0 for every vertex q
    for j in range(v.size):
        q = np.eye(v.size)[j]
        assert (v - p) @ (q - p) <= 1e-9


def test_comparative_breakpoints_constant():
    assert [len(t) - 1 for t in COMPARATIVE_BREAKPOINTS] == [4, 6, 5]
    assert COMPARATIVE_MEAN.sum() == pytest.approx(1.0)
