"""
Mean-field Nash equilibria of the market-choice game.

A point ``(pbar_1, pbar_2)`` of the unit square is an equilibrium if, for each
class, it either lies on that class's equal-payoff line or sits on the edge
(``pbar_c = 0`` or ``1``) of the market that class strictly prefers.  The
equal-payoff lines are traced by marching squares whose edge roots are
refined by bracketing searches; the residual is continuous but kinked where matching
saturates, so only bracketing root finders (Illinois, Brent) are used.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .market_core import Aggregates, GameParams, market_constants, payoff_gap, payoff_grid

POT_HET = "potentially_heterogeneous"
PARTIAL_HET = "partially_potentially_heterogeneous"
PURE_SAME = "homogeneous_pure_same_market"
PURE_SPLIT = "homogeneous_pure_split"

INTERIOR_MARGIN = 1e-6
ROOT_TOL = 1e-10
DEFAULT_GRID_N = 512


class EquilibriumPoint(NamedTuple):
    aggregates: Aggregates
    kind: str
    payoff_gap_1: float
    payoff_gap_2: float


@dataclass(frozen=True)
class PhaseRegion:
    has_pot_heterogeneous: bool
    has_pure_split: bool
    partially_het_count: int


def equal_payoff_residual(c: int, aggr: Aggregates, params: GameParams) -> float:
    """``P_1 - P_2`` for class ``c`` at the given aggregates."""
    return float(payoff_gap(c, aggr[0], aggr[1], params))


def _bracket_vec(fun, lo, hi, f_lo, f_hi, tol=ROOT_TOL, max_iter=200):
    """Vectorized Illinois (modified regula falsi) root search on ``[lo, hi]``.

    ``fun`` maps an array of parameters to residuals; ``f_lo`` and ``f_hi`` are the
    residuals at the ends, of opposite sign.  The bracket is kept throughout, so
    a jump discontinuity is converged onto rather than skipped.
    """
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    fa = np.array(f_lo, dtype=float)
    fb = np.array(f_hi, dtype=float)
    x = 0.5 * (a + b)
    side = np.zeros(a.shape, dtype=int)
    for _ in range(max_iter):
        if a.size == 0:
            break
        x_new = (a * fb - b * fa) / (fb - fa)
        x_new = np.where(np.isfinite(x_new) & (x_new >= a) & (x_new <= b), x_new, 0.5 * (a + b))
        done = (np.abs(x_new - x) <= tol) | (b - a <= tol)
        x = x_new
        if np.all(done):
            break
        fx = fun(x)
        keep_a = np.sign(fx) == np.sign(fa)
        hit = fx == 0
        # move the end on the root's side; halve the stale end's residual if it repeats
        a_new = np.where(keep_a, x, a)
        b_new = np.where(keep_a, b, x)
        fa = np.where(keep_a, fx, np.where(side == -1, 0.5 * fa, fa))
        fb = np.where(keep_a, np.where(side == 1, 0.5 * fb, fb), fx)
        side = np.where(keep_a, 1, -1)
        a = np.where(hit, x, a_new)
        b = np.where(hit, x, b_new)
    return x


def _is_root(f_mid, f_lo, f_hi, rel=1e-4):
    """Reject sign changes that are jumps (an empty market) rather than zero crossings."""
    return np.abs(f_mid) <= rel * np.maximum(np.abs(f_lo), np.abs(f_hi))


def equal_payoff_curve(c: int, params: GameParams, grid_n: int = DEFAULT_GRID_N) -> list[np.ndarray]:
    """Equal-payoff line of class ``c`` as a list of polylines, each an ``(k, 2)`` array.

    The residual is sampled on ``grid_n`` horizontal and vertical scan lines; each
    sign change along a scan line is refined by a bracketing secant search, and roots
    on the boundary of each grid cell are joined by marching squares.
    """
    if grid_n < 16:
        raise ValueError("grid_n must be at least 16")
    g = np.linspace(0.0, 1.0, grid_n)
    X, Y = np.meshgrid(g, g, indexing="ij")
    R = payoff_gap(c, X, Y, params)
    sgn = np.sign(R)

    # Edge roots. Horizontal edges: (i, j) -> (i+1, j), vertical edges: (i, j) -> (i, j+1).
    roots = {}
    hi_i, hj = np.nonzero(sgn[:-1, :] * sgn[1:, :] < 0)
    vi, vj_ = np.nonzero(sgn[:, :-1] * sgn[:, 1:] < 0)
    # both edge families in one solve: a root at parameter t lies at (x0 + t*dx, y0 + t*dy)
    nh = hi_i.size
    if nh + vi.size:
        x0 = np.concatenate([g[hi_i], g[vi]])
        y0 = np.concatenate([g[hj], g[vj_]])
        dx = np.concatenate([np.ones(nh), np.zeros(vi.size)])
        dy = 1.0 - dx
        f0 = np.concatenate([R[hi_i, hj], R[vi, vj_]])
        f1 = np.concatenate([R[hi_i + 1, hj], R[vi, vj_ + 1]])
        gap = lambda t: payoff_gap(c, x0 + t * dx, y0 + t * dy, params)
        step = np.concatenate([g[hi_i + 1] - g[hi_i], g[vj_ + 1] - g[vj_]])
        t = _bracket_vec(gap, np.zeros_like(x0), step, f0, f1)
        ok = _is_root(gap(t), f0, f1)
        xs, ys = x0 + t * dx, y0 + t * dy
        for n_, (i, j) in enumerate(zip(hi_i, hj)):
            if ok[n_]:
                roots[("h", int(i), int(j))] = (float(xs[n_]), float(g[j]))
        for n_, (i, j) in enumerate(zip(vi, vj_)):
            if ok[nh + n_]:
                roots[("v", int(i), int(j))] = (float(g[i]), float(ys[nh + n_]))
    # exact zeros on grid nodes are treated as roots on both adjacent edges
    zi, zj = np.nonzero(sgn == 0)
    zero_nodes = {(int(i), int(j)) for i, j in zip(zi, zj)}

    segments = []
    n = grid_n - 1
    active = set()
    for kind, i, j in roots:
        if kind == "h":
            active.update({(i, j), (i, j - 1)})
        else:
            active.update({(i, j), (i - 1, j)})
    for i, j in zero_nodes:
        active.update({(i, j), (i - 1, j), (i, j - 1), (i - 1, j - 1)})
    for i, j in sorted(active):
        if not (0 <= i < n and 0 <= j < n):
            continue
        edges = [("h", i, j), ("v", i + 1, j), ("h", i, j + 1), ("v", i, j)]
        pts = [e for e in edges if e in roots]
        corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
        pts_nodes = [("n",) + k for k in corners if k in zero_nodes]
        keys = pts + pts_nodes
        if len(keys) == 2:
            segments.append((keys[0], keys[1]))
        elif len(keys) == 4 and not pts_nodes:
            # saddle cell: pair by the sign of the cell-centre residual
            cval = payoff_gap(c, g[i] + 0.5 / n, g[j] + 0.5 / n, params)
            if np.sign(cval) == sgn[i, j]:
                segments += [(pts[0], pts[1]), (pts[2], pts[3])]
            else:
                segments += [(pts[0], pts[3]), (pts[1], pts[2])]
    coords = dict(roots)
    for k in zero_nodes:
        coords[("n",) + k] = (float(g[k[0]]), float(g[k[1]]))
    return _chain(segments, coords)


def _chain(segments, coords) -> list[np.ndarray]:
    adj: dict = {}
    for a, b in segments:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    seen_edges = set()
    lines = []

    def walk(start):
        path = [start]
        cur, prev = start, None
        while True:
            nxt = [k for k in adj[cur] if k != prev and frozenset((cur, k)) not in seen_edges]
            if not nxt:
                break
            k = nxt[0]
            seen_edges.add(frozenset((cur, k)))
            path.append(k)
            prev, cur = cur, k
            if cur == start:
                break
        return path

    # open chains first (start at degree-1 nodes), then closed loops
    for start in sorted((k for k, v in adj.items() if len(v) == 1), key=repr):
        if any(frozenset((start, k)) not in seen_edges for k in adj[start]):
            lines.append(walk(start))
    for start in sorted(adj, key=repr):
        if any(frozenset((start, k)) not in seen_edges for k in adj[start]):
            lines.append(walk(start))
    return [np.array([coords[k] for k in line]) for line in lines if len(line) >= 2]


def _bisect_scalar(fun, lo, hi, f_lo=None, tol=ROOT_TOL, max_iter=200):
    if f_lo is None:
        f_lo = fun(lo)
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if np.sign(fm) == np.sign(f_lo):
            lo, f_lo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _segment_intersections(curve_a, curve_b):
    """Pairwise intersections of two polylines as ``(segment start, segment end, point)``."""
    out = []
    for line in curve_a:
        p, r = line[:-1], line[1:] - line[:-1]
        for other in curve_b:
            q, s = other[:-1], other[1:] - other[:-1]
            # broadcast every segment of `line` against every segment of `other`
            rxs = r[:, None, 0] * s[None, :, 1] - r[:, None, 1] * s[None, :, 0]
            qp = q[None, :, :] - p[:, None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (qp[..., 0] * s[None, :, 1] - qp[..., 1] * s[None, :, 0]) / rxs
                u = (qp[..., 0] * r[:, None, 1] - qp[..., 1] * r[:, None, 0]) / rxs
            ok = (rxs != 0) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
            for a, b in zip(*np.nonzero(ok)):
                out.append((line[a], line[a + 1], p[a] + t[a, b] * r[a]))
    return out


def _refine_crossing(u, v, params: GameParams, h: float):
    """Refine the crossing of the two equal-payoff lines near the class-1 segment ``u -> v``.

    Points along the segment are projected onto the class-1 line by bisection along the
    segment normal, and the class-2 residual is bisected along the projected segment.
    Returns ``None`` when no bracket is found.
    """
    d = v - u
    length = float(np.hypot(*d))
    if length == 0:
        return None
    nrm = np.array([-d[1], d[0]]) / length
    reach = 4.0 * h

    def project(s):
        w = u + s * d
        r1 = lambda t: float(payoff_gap(1, *(w + t * nrm), params))
        lo, hi = -reach, reach
        flo, fhi = r1(lo), r1(hi)
        if np.sign(flo) == np.sign(fhi):
            return w
        if flo == 0.0:
            return w + lo * nrm
        if fhi == 0.0:
            return w + hi * nrm
        return w + brentq(r1, lo, hi, xtol=1e-14) * nrm

    r2 = lambda s: float(payoff_gap(2, *project(s), params))
    g0, g1 = r2(0.0), r2(1.0)
    if g0 == 0.0 or g1 == 0.0:
        return project(0.0 if g0 == 0.0 else 1.0)
    if np.sign(g0) == np.sign(g1):
        return None
    s = brentq(r2, 0.0, 1.0, xtol=1e-13)
    return project(s)


def _interior(x: float) -> bool:
    return INTERIOR_MARGIN <= x <= 1.0 - INTERIOR_MARGIN


def _gaps(x, y, params):
    P, _ = payoff_grid(x, y, params)
    return float(P[0, 0] - P[0, 1]), float(P[1, 0] - P[1, 1])


def _edge_roots(fun, n=512):
    """Roots of a scalar function of one variable on (0, 1), by scan plus bisection."""
    t = np.linspace(0.0, 1.0, n + 1)
    vals = fun(t)
    out = []
    for k in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        x = float(_bisect_scalar(lambda s: float(fun(np.array(s))), t[k], t[k + 1], vals[k]))
        if _is_root(float(fun(np.array(x))), vals[k], vals[k + 1]):
            out.append(x)
    for k in np.nonzero(vals == 0)[0]:
        out.append(float(t[k]))
    return sorted(x for x in out if _interior(x))


def find_equilibria(params: GameParams, grid_n: int = DEFAULT_GRID_N) -> list[EquilibriumPoint]:
    """All Nash equilibria visible at resolution ``grid_n``.

    Returns interior crossings of the two equal-payoff lines, edge points where one
    class is indifferent and the other strictly prefers the edge's market, and the
    corners whose payoff orderings point into them.  If both classes are indifferent
    on the whole interior, the continuum is represented by its centre ``(0.5, 0.5)``.
    """
    out: list[EquilibriumPoint] = []
    h = 1.0 / (grid_n - 1)

    # identical markets: every interior point is an equilibrium; report the centre
    g = np.linspace(h, 1.0 - h, 33)
    X, Y = np.meshgrid(g, g, indexing="ij")
    tiny = 1e-12 * gap_scale(params)
    if all(np.max(np.abs(payoff_gap(c, X, Y, params))) <= tiny for c in (1, 2)):
        g1, g2 = _gaps(0.5, 0.5, params)
        out.append(EquilibriumPoint(Aggregates(0.5, 0.5), POT_HET, g1, g2))

    # (i) interior crossings
    c1 = equal_payoff_curve(1, params, grid_n)
    c2 = equal_payoff_curve(2, params, grid_n)
    found = []
    for u, v, guess in _segment_intersections(c1, c2):
        pt = _refine_crossing(u, v, params, h)
        if pt is None:
            pt = guess
        if not (_interior(pt[0]) and _interior(pt[1])):
            continue
        if any(np.hypot(*(pt - q)) < 2 * h for q in found):
            continue
        found.append(pt)
    for pt in sorted(found, key=lambda q: (q[0], q[1])):
        g1, g2 = _gaps(pt[0], pt[1], params)
        out.append(EquilibriumPoint(Aggregates(float(pt[0]), float(pt[1])), POT_HET, g1, g2))

    # (ii) one class indifferent, the other pure at an edge
    n_edge = max(grid_n, 64)
    for edge in (0.0, 1.0):
        for x in _edge_roots(lambda t: payoff_gap(1, t, np.full_like(t, edge), params), n_edge):
            g1, g2 = _gaps(x, edge, params)
            if (g2 > 0) if edge == 1.0 else (g2 < 0):
                out.append(EquilibriumPoint(Aggregates(x, edge), PARTIAL_HET, g1, g2))
        for y in _edge_roots(lambda t: payoff_gap(2, np.full_like(t, edge), t, params), n_edge):
            g1, g2 = _gaps(edge, y, params)
            if (g1 > 0) if edge == 1.0 else (g1 < 0):
                out.append(EquilibriumPoint(Aggregates(edge, y), PARTIAL_HET, g1, g2))

    # (iii) corners
    for x, y in ((0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)):
        g1, g2 = _gaps(x, y, params)
        if x == y:
            out.append(EquilibriumPoint(Aggregates(x, y), PURE_SAME, g1, g2))
            continue
        ok1 = g1 > 0 if x == 1.0 else g1 < 0
        ok2 = g2 > 0 if y == 1.0 else g2 < 0
        if ok1 and ok2:
            out.append(EquilibriumPoint(Aggregates(x, y), PURE_SPLIT, g1, g2))
    return out


def classify(equilibria) -> PhaseRegion:
    kinds = [e.kind for e in equilibria]
    return PhaseRegion(
        has_pot_heterogeneous=POT_HET in kinds,
        has_pure_split=PURE_SPLIT in kinds,
        partially_het_count=kinds.count(PARTIAL_HET),
    )


def symmetric_nash_value(params: GameParams, tol: float = ROOT_TOL) -> float | None:
    """Class-1 aggregate of the symmetric interior equilibrium on ``pbar_2 = 1 - pbar_1``.

    In a symmetric setup the two equal-payoff conditions coincide on the
    anti-diagonal, so a single bisection suffices.  Returns ``None`` if the
    residual does not change sign in the interior.
    """
    fun = lambda x: payoff_gap(1, x, 1.0 - np.asarray(x), params)
    roots = _edge_roots(fun, 2048)
    if not roots:
        return None
    # the equal-payoff root nearest the centre is the one the dynamics sees
    return min(roots, key=lambda x: abs(x - 0.5))


# --- analytic boundary of the pure-split region ------------------------------------

class BoundaryRoots(NamedTuple):
    seller_saturated: list[float]
    buyer_saturated: list[float]


def _corner_constants(theta_1: float, params: GameParams):
    p = params.replace(theta_1=theta_1, theta_2=1.0 - theta_1)
    mc = market_constants(p)
    return mc


def split_quadratic(theta_1: float, params: GameParams, branch: str = "seller"):
    """Coefficients ``(c2, c1, c0)`` of the pure-split payoff inequality at corner (1, 0).

    The class-1 payoff advantage of market 1 over market 2 at ``(1, 0)``, times a
    positive factor, equals ``c2 pb^2 + c1 pb + c0``.  ``branch`` selects whether
    market 1 is saturated with sellers (valid bids all matched) or with buyers.
    """
    mc = _corner_constants(theta_1, params)
    vb1, va2 = mc.v_bid[0], mc.v_ask[1]
    sa1, sb1, sa2, sb2 = mc.s_ask[0], mc.s_bid[0], mc.s_ask[1], mc.s_bid[1]
    if branch == "seller":
        return (-(sa2 * va2 + sb1 * vb1 + sa1 * vb1 + sb2 * vb1),
                sb1 * vb1 + 2.0 * sa2 * va2 + sa1 * vb1,
                -sa2 * va2)
    if branch == "buyer":
        return (-(sa1 + sb1 + sa2 + sb2), sa1 + sb1 + 2.0 * sa2, -sa2)
    raise ValueError("branch must be 'seller' or 'buyer'")


def _saturation_ratio(theta_1: float, pb: float, params: GameParams) -> float:
    mc = _corner_constants(theta_1, params)
    with np.errstate(divide="ignore"):
        return pb / (1.0 - pb) * mc.v_bid[0] / mc.v_ask[0]


def phase_boundary_roots(theta_1: float, params: GameParams) -> BoundaryRoots:
    """Roots in ``pb`` of the pure-split inequality at corner (1, 0), per saturation branch.

    Only real roots in ``[0, 1]`` consistent with the branch's saturation assumption
    are kept.
    """
    out = {}
    for branch in ("seller", "buyer"):
        c2, c1, c0 = split_quadratic(theta_1, params, branch)
        roots = np.roots([c2, c1, c0])
        keep = []
        for z in roots:
            if abs(z.imag) > 1e-12:
                continue
            x = float(z.real)
            if not 0.0 <= x <= 1.0:
                continue
            q = _saturation_ratio(theta_1, x, params)
            if (q < 1.0) if branch == "seller" else (q > 1.0):
                keep.append(x)
        out[branch] = sorted(keep)
    return BoundaryRoots(out["seller"], out["buyer"])


def split_exists_analytic(theta_1: float, pb: float, params: GameParams) -> bool:
    """Whether either pure-split corner is an equilibrium, from the quadratic inequalities."""

    def corner10(th):
        q = _saturation_ratio(th, pb, params)
        branch = "seller" if q < 1.0 else "buyer"
        c2, c1, c0 = split_quadratic(th, params, branch)
        return c2 * pb * pb + c1 * pb + c0 > 0.0

    # relabelling the markets maps corner (0, 1) at theta_1 onto corner (1, 0) at 1 - theta_1
    return bool(corner10(theta_1) or corner10(1.0 - theta_1))


# --- phase diagram -----------------------------------------------------------------

class PhaseCell(NamedTuple):
    theta_1: float
    pb: float
    region: PhaseRegion
    analytic_split: bool


def _cell(args):
    theta_1, pb, base, grid_n = args
    p = base.replace(theta_1=theta_1, theta_2=1.0 - theta_1, pb_1=pb, pb_2=1.0 - pb)
    region = classify(find_equilibria(p, grid_n))
    return PhaseCell(theta_1, pb, region, split_exists_analytic(theta_1, pb, base))


def phase_diagram(thetas, pbs, params: GameParams | None = None, grid_n: int = 64,
                  jobs: int = 1) -> list[list[PhaseCell]]:
    """Equilibrium types on a ``(theta_1, pb)`` grid of symmetric games.

    Cell results are returned as ``grid[i_theta][i_pb]`` regardless of scheduling.
    """
    base = params or GameParams()
    thetas, pbs = list(map(float, thetas)), list(map(float, pbs))
    if len(thetas) * len(pbs) == 0:
        return []
    tasks = [(t, p, base, grid_n) for t in thetas for p in pbs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            cells = list(ex.map(_cell, tasks, chunksize=16))
    else:
        cells = [_cell(t) for t in tasks]
    n = len(pbs)
    return [cells[i * n:(i + 1) * n] for i in range(len(thetas))]


def cell_centres(n: int, lo: float, hi: float) -> np.ndarray:
    step = (hi - lo) / n
    return lo + step * (np.arange(n) + 0.5)


def boundary_mismatches(grid: list[list[PhaseCell]]) -> list[tuple[int, int]]:
    """Cells where the direct search and the analytic test disagree on the split region,
    excluding cells adjacent to a change of the analytic label."""
    nt, npb = len(grid), len(grid[0]) if grid else 0
    lab = np.array([[c.analytic_split for c in row] for row in grid])
    bad = []
    for i in range(nt):
        for j in range(npb):
            c = grid[i][j]
            if c.region.has_pure_split == c.analytic_split:
                continue
            near = lab[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2]
            if near.all() or not near.any():
                bad.append((i, j))
    return bad


def gap_scale(params: GameParams) -> float:
    """Largest class payoff at the symmetric centre; a natural unit for residual tolerances."""
    P, _ = payoff_grid(0.5, 0.5, params)
    return float(np.max(np.abs(P))) or math.ulp(1.0)
