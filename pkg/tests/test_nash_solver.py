import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.optimize import brentq

from marketchoice.market_core import Aggregates, GameParams, payoff_gap, payoff_grid
from marketchoice.nash_solver import (
    PARTIAL_HET, POT_HET, PURE_SAME, PURE_SPLIT, boundary_mismatches, cell_centres,
    classify, equal_payoff_curve, equal_payoff_residual, find_equilibria, gap_scale,
    phase_boundary_roots, phase_diagram, split_exists_analytic, split_quadratic,
    symmetric_nash_value,
)

thetas = st.floats(0.05, 0.95)
pbs = st.floats(0.02, 0.98)


def corner_gaps(x, y, params):
    P, _ = payoff_grid(x, y, params)
    return P[0, 0] - P[0, 1], P[1, 0] - P[1, 1]


@pytest.fixture(scope="module")
def het_equilibria():
    p = GameParams.symmetric(0.3, 0.2)
    return p, find_equilibria(p)


@pytest.fixture(scope="module")
def split_equilibria():
    p = GameParams.symmetric(0.2, 0.45)
    return p, find_equilibria(p)


def test_interior_equilibria_are_indifferent(het_equilibria):
    p, eqs = het_equilibria
    scale = gap_scale(p)
    interior = [e for e in eqs if e.kind == POT_HET]
    assert interior
    for e in interior:
        assert abs(equal_payoff_residual(1, e.aggregates, p)) < 1e-8 * scale
        assert abs(equal_payoff_residual(2, e.aggregates, p)) < 1e-8 * scale


def test_edge_and_corner_conditions(split_equilibria):
    p, eqs = split_equilibria
    scale = gap_scale(p)
    for e in eqs:
        x, y = e.aggregates
        g1, g2 = corner_gaps(x, y, p)
        if e.kind == PARTIAL_HET:
            on_x_edge = x in (0.0, 1.0)
            free, pinned, edge = (g2, g1, x) if on_x_edge else (g1, g2, y)
            assert abs(free) < 1e-8 * scale
            assert pinned > 0 if edge == 1.0 else pinned < 0
        elif e.kind == PURE_SPLIT:
            assert (g1 > 0) == (x == 1.0) and (g2 > 0) == (y == 1.0)
        elif e.kind == PURE_SAME:
            assert x == y


def test_equilibrium_set_symmetric(het_equilibria):
    # (x, y) -> (1 - y, 1 - x) maps a symmetric game onto itself
    _, eqs = het_equilibria
    pts = np.array([e.aggregates for e in eqs])
    for x, y in pts:
        assert np.min(np.hypot(pts[:, 0] - (1 - y), pts[:, 1] - (1 - x))) < 1e-6


def test_symmetric_value_matches_brentq():
    p = GameParams.symmetric(0.3, 0.2)
    x = symmetric_nash_value(p)
    f = lambda t: float(payoff_gap(1, t, 1 - t, p))
    # independent bracket around the returned root
    ref = brentq(f, x - 1e-3, x + 1e-3, xtol=1e-14)
    assert x == pytest.approx(ref, abs=1e-9)
    assert symmetric_nash_value(p) == pytest.approx(1 - symmetric_nash_value(p.replace(
        theta_1=0.7, theta_2=0.3)), abs=1e-9)


def test_equal_payoff_curve_points_lie_on_curve():
    p = GameParams.symmetric(0.3, 0.2)
    scale = gap_scale(p)
    curves = equal_payoff_curve(1, p, 128)
    assert curves
    for c in curves:
        r = payoff_gap(1, c[:, 0], c[:, 1], p)
        assert np.max(np.abs(r)) < 1e-7 * scale


def test_classify_counts():
    p = GameParams.symmetric(0.2, 0.45)
    region = classify(find_equilibria(p))
    assert region.has_pure_split


@settings(max_examples=60, deadline=None)
@given(thetas, pbs)
def test_analytic_split_matches_corner_signs(theta, pb):
    p = GameParams.symmetric(theta, pb)
    g = [corner_gaps(1.0, 0.0, p), corner_gaps(0.0, 1.0, p)]
    assume(min(abs(v) for pair in g for v in pair) > 1e-9)
    direct = (g[0][0] > 0 and g[0][1] < 0) or (g[1][0] < 0 and g[1][1] > 0)
    assert split_exists_analytic(theta, pb, GameParams()) == direct


@settings(max_examples=30, deadline=None)
@given(thetas)
def test_boundary_roots_zero_the_quadratic(theta):
    roots = phase_boundary_roots(theta, GameParams())
    for branch, rs in zip(("seller", "buyer"), roots):
        c2, c1, c0 = split_quadratic(theta, GameParams(), branch)
        for r in rs:
            assert 0.0 <= r <= 1.0
            assert abs(c2 * r * r + c1 * r + c0) < 1e-10 * (abs(c2) + abs(c1) + abs(c0))


def test_small_phase_diagram_agrees_with_analytic():
    th = cell_centres(6, 0.0, 0.5)
    pb = cell_centres(6, 0.0, 1.0)
    grid = phase_diagram(th, pb, grid_n=48)
    assert len(grid) == 6 and all(len(r) == 6 for r in grid)
    assert boundary_mismatches(grid) == []


def test_split_quadratic_branch_validation():
    with pytest.raises(ValueError):
        split_quadratic(0.3, GameParams(), "neither")
