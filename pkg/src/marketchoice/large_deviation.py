"""
Minimal-action (weak-noise) selection between stable fixed points.

For a Langevin process ``dx = mu(x) dt + sqrt(r) B dW`` with ``B B^T = Sigma``,
the stationary weight of a metastable peak decays like ``exp(-W / r)``.  The
exponent of the transition rate between two neighbouring peaks is the minimal
Onsager-Machlup action of a path from one peak to the saddle that separates
them; relaxation from the saddle onward is free.  For a chain of peaks the
surviving peaks are those minimizing ``W_i = sum_{j<i} S_{j->j+1} + sum_{j>i} S_{j->j-1}``.

Applied to EWA learning this fixes the aggregates of heterogeneous steady
states: the population splits between two peaks exactly at the aggregate where
both are dominant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Protocol, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize

from .fp_analysis import (
    ClassPayoffs, FixedPoint, FixedPointSet, LearningParams, class_payoffs_at,
    diffusion_from_payoffs, diffusion_gradient_from_payoffs, drift_from_payoffs,
    fixed_points, fixed_points_from_payoffs, jacobian_from_payoffs, softmax_choice,
)
from .market_core import Aggregates, GameParams

DEFAULT_N_STEPS = 10
DEFAULT_T_SPAN = 10.0
EIGEN_FLOOR = 1e-12
MAX_ITER = 10_000

HOMOGENEOUS_MIXED = "homogeneous_mixed"
HETEROGENEOUS_MIXED = "heterogeneous_mixed"
HETEROGENEOUS_PURE = "heterogeneous_pure"
THREE_PEAK = "three_peak"

LOW, MID, HIGH = "low", "mid", "high"


class ConditioningError(ArithmeticError):
    """Diffusion matrix is not positive definite along the path."""


class OptimizerError(ArithmeticError):
    """Action minimization did not converge."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NoCoexistenceError(ValueError):
    """The action difference does not change sign over the bracket."""


class EmptyWedgeError(ValueError):
    """No heterogeneous steady state exists at this intensity of choice."""


# --- models --------------------------------------------------------------------

class LangevinModel(Protocol):
    dim: int

    def drift(self, x: np.ndarray) -> np.ndarray: ...            # (..., d)
    def diffusion(self, x: np.ndarray) -> np.ndarray: ...        # (..., d, d)
    def drift_jacobian(self, x: np.ndarray) -> np.ndarray: ...   # (..., d, d)
    def diffusion_gradient(self, x: np.ndarray) -> np.ndarray: ...  # (..., d, d, d)


@dataclass(frozen=True)
class EWAModel:
    """Single-trader attraction dynamics at frozen payoffs."""

    payoffs: ClassPayoffs
    alpha: float
    beta: float
    dim: int = 2

    @classmethod
    def at(cls, aggr: Aggregates, params: GameParams, learning: LearningParams, c: int = 1):
        return cls(class_payoffs_at(aggr, params, c), learning.alpha, learning.beta)

    def drift(self, x):
        return drift_from_payoffs(x, self.payoffs.P, self.alpha, self.beta)

    def diffusion(self, x):
        return diffusion_from_payoffs(x, self.payoffs.P, self.payoffs.Q, self.alpha, self.beta)

    def drift_jacobian(self, x):
        return jacobian_from_payoffs(x, self.payoffs.P, self.alpha, self.beta)

    def diffusion_gradient(self, x):
        return diffusion_gradient_from_payoffs(x, self.payoffs.P, self.payoffs.Q, self.alpha, self.beta)


@dataclass(frozen=True)
class DoubleWellModel:
    """Gradient flow in ``V(x) = height * (x_0^2 - 1)^2 + tilt * x_0 + 0.5 * stiffness * |x_rest|^2``.

    Noise covariance is the identity, so uphill minimal actions equal ``2 * Delta V``.
    """

    height: float = 0.25
    tilt: float = 0.0
    stiffness: float = 1.0
    dim: int = 1

    def potential(self, x):
        x = np.asarray(x, float)
        v = self.height * (x[..., 0] ** 2 - 1.0) ** 2 + self.tilt * x[..., 0]
        if self.dim > 1:
            v = v + 0.5 * self.stiffness * np.sum(x[..., 1:] ** 2, axis=-1)
        return v

    def drift(self, x):
        x = np.asarray(x, float)
        out = -self.stiffness * x
        out[..., 0] = -(4.0 * self.height * x[..., 0] * (x[..., 0] ** 2 - 1.0) + self.tilt)
        return out

    def diffusion(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim)).copy()

    def drift_jacobian(self, x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape[:-1] + (self.dim, self.dim))
        for k in range(1, self.dim):
            out[..., k, k] = -self.stiffness
        out[..., 0, 0] = -(12.0 * self.height * x[..., 0] ** 2 - 4.0 * self.height)
        return out

    def diffusion_gradient(self, x):
        x = np.asarray(x, float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    def critical_points(self) -> np.ndarray:
        """Stationary points of the double-well coordinate, increasing."""
        roots = np.roots([4.0 * self.height, 0.0, -4.0 * self.height, self.tilt])
        return np.sort(roots[np.abs(roots.imag) < 1e-12].real)


# --- action ----------------------------------------------------------------------

@dataclass(frozen=True)
class DiscretePath:
    times: np.ndarray
    states: np.ndarray  # (n_steps + 1, dim)
    action: float
    floor_active: bool = False

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1


def _regularized_inverse(S):
    if S.shape[-1] == 2:
        # closed form when no eigenvalue needs flooring
        a, b, c = S[..., 0, 0], S[..., 0, 1], S[..., 1, 1]
        tr = a + c
        lam_min = 0.5 * tr - np.sqrt(0.25 * (a - c) ** 2 + b * b)
        if np.all(tr > 0) and np.all(lam_min >= EIGEN_FLOOR * tr):
            det = a * c - b * b
            inv = np.empty_like(S)
            inv[..., 0, 0] = c / det
            inv[..., 1, 1] = a / det
            inv[..., 0, 1] = inv[..., 1, 0] = -b / det
            return inv, False
    w, V = np.linalg.eigh(S)
    tr = np.trace(S, axis1=-2, axis2=-1)
    if np.any(tr <= 0) or np.any(~np.isfinite(w)):
        raise ConditioningError("diffusion matrix has non-positive trace")
    floor = EIGEN_FLOOR * tr[..., None]
    active = bool(np.any(w < floor))
    w = np.maximum(w, floor)
    inv = np.einsum("...ij,...j,...kj->...ik", V, 1.0 / w, V)
    return inv, active


def action_and_gradient(states: np.ndarray, dt: float, model: LangevinModel):
    """Midpoint-rule action of a discrete path and its gradient with respect to every state.

    Returns ``(action, grad, floor_active)`` where ``grad`` has the shape of ``states``.
    """
    x = np.asarray(states, float)
    mid = 0.5 * (x[1:] + x[:-1])
    vel = (x[1:] - x[:-1]) / dt
    res = vel - model.drift(mid)
    Minv, active = _regularized_inverse(model.diffusion(mid))
    w = np.einsum("kij,kj->ki", Minv, res)
    action = 0.5 * dt * float(np.sum(w * res))
    J = model.drift_jacobian(mid)
    G = model.diffusion_gradient(mid)
    # d/d mid of 0.5 dt r^T M r: -dt J^T w - 0.5 dt w^T dSigma/dmid_l w
    dmid = -dt * np.einsum("kji,kj->ki", J, w) - 0.5 * dt * np.einsum("ki,kijl,kj->kl", w, G, w)
    grad = np.zeros_like(x)
    grad[1:] += w + 0.5 * dmid
    grad[:-1] += -w + 0.5 * dmid
    return action, grad, active


def path_action(path_states: np.ndarray, dt: float, model: LangevinModel) -> float:
    """Onsager-Machlup action (midpoint rule) of a discrete path."""
    return action_and_gradient(path_states, dt, model)[0]


def _resample_by_arclength(pts: np.ndarray, n: int) -> np.ndarray:
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return np.repeat(pts[:1], n, axis=0)
    target = np.linspace(0.0, s[-1], n)
    return np.stack([np.interp(target, s, pts[:, k]) for k in range(pts.shape[1])], axis=1)


def relaxation_path(model: LangevinModel, saddle, toward, n: int, t_max: float = 200.0,
                    kick: float = 1e-6) -> np.ndarray:
    """Deterministic flow from just off the saddle toward ``toward``, resampled to ``n`` points.

    The flow leaves the saddle along its unstable direction on the side facing ``toward``.
    """
    saddle = np.asarray(saddle, float)
    toward = np.asarray(toward, float)
    J = model.drift_jacobian(saddle[None])[0]
    ev, evec = np.linalg.eig(J)
    u = np.real(evec[:, int(np.argmax(ev.real))])
    if np.dot(u, toward - saddle) < 0:
        u = -u
    scale = max(np.linalg.norm(toward - saddle), 1e-12)
    x0 = saddle + kick * scale * u
    stop = lambda t, y: np.linalg.norm(y - toward) - 1e-4 * scale
    stop.terminal = True
    sol = solve_ivp(lambda t, y: model.drift(y[None])[0], (0.0, t_max), x0, rtol=1e-9, atol=1e-12,
                    events=stop, max_step=t_max / 200)
    pts = np.vstack([saddle[None], sol.y.T, toward[None]])
    return _resample_by_arclength(pts, n)


@dataclass(frozen=True)
class TransitionSpec:
    from_point: np.ndarray
    to_point: np.ndarray | None
    saddle: np.ndarray
    min_action: float
    path: DiscretePath
    converged: bool


def minimize_action(model: LangevinModel, start, saddle, n_steps: int = DEFAULT_N_STEPS,
                    t_span: float = DEFAULT_T_SPAN, to_point=None, init: str = "auto",
                    gtol: float = 1e-10, strict: bool = False) -> TransitionSpec:
    """Minimal action of paths from ``start`` to ``saddle`` in time ``t_span``.

    Interior states of a path with ``n_steps`` equal time steps are optimized by
    L-BFGS-B with the exact gradient of the discretized action.  The initial path is
    the straight line (``"linear"``), the time-reversed relaxation path from the saddle
    (``"flow"``) or both with the lower action kept (``"both"``).  The default ``"auto"``
    starts from the straight line and retries from the relaxation path only if the
    first run fails.  With ``strict`` a non-converged result raises.
    """
    if n_steps < 2:
        raise ValueError("n_steps must be at least 2")
    start = np.atleast_1d(np.asarray(start, float))
    saddle = np.atleast_1d(np.asarray(saddle, float))
    if init not in ("auto", "linear", "flow", "both"):
        raise ValueError("init must be 'auto', 'linear', 'flow' or 'both'")
    dt = t_span / n_steps
    d = start.size

    def fun(z):
        x = np.vstack([start[None], z.reshape(n_steps - 1, d), saddle[None]])
        a, g, _ = action_and_gradient(x, dt, model)
        return a, g[1:-1].ravel()

    def run(kind):
        if kind == "linear":
            x0 = np.linspace(start, saddle, n_steps + 1)
        else:
            x0 = relaxation_path(model, saddle, start, n_steps + 1)[::-1]
        res = minimize(fun, x0[1:-1].ravel(), jac=True, method="L-BFGS-B",
                       options=dict(maxiter=MAX_ITER, maxfun=4 * MAX_ITER, gtol=gtol, ftol=1e-15))
        # L-BFGS-B reports "abnormal termination" when the action is already at round-off
        ok = bool(res.success) or float(np.max(np.abs(res.jac))) < 1e-6 * max(1.0, res.fun)
        return res, ok

    kinds = {"auto": ["linear"], "linear": ["linear"], "flow": ["flow"], "both": ["linear", "flow"]}[init]
    best, converged = None, False
    for kind in kinds:
        res, ok = run(kind)
        if best is None or res.fun < best.fun:
            best, converged = res, ok
    if init == "auto" and not converged:
        try:
            res, ok = run("flow")
            if ok or res.fun < best.fun:
                best, converged = res, ok
        except (ArithmeticError, ValueError):
            pass
    x = np.vstack([start[None], best.x.reshape(n_steps - 1, d), saddle[None]])
    a, _, active = action_and_gradient(x, dt, model)
    path = DiscretePath(np.linspace(0.0, t_span, n_steps + 1), x, a, active)
    spec = TransitionSpec(start, None if to_point is None else np.asarray(to_point, float),
                          saddle, a, path, converged)
    if strict and not converged:
        raise OptimizerError(f"action minimization failed: {best.message}", best=spec)
    return spec


def action_difference(model: LangevinModel, fp_a, fp_b, saddle, **kw) -> float:
    """``S*(a -> b) - S*(b -> a)``; negative when ``a`` is the more stable peak."""
    return (minimize_action(model, fp_a, saddle, **kw).min_action
            - minimize_action(model, fp_b, saddle, **kw).min_action)


# --- peak selection --------------------------------------------------------------

def label_stable_points(fps: FixedPointSet) -> list[str]:
    """Label stable points as low (market 2), mid (mixed) or high (market 1) by nearest anchor."""
    P = fps.payoffs.P
    anchors = {LOW: -P[1], MID: P[0] - P[1], HIGH: P[0]}
    labels = [min(anchors, key=lambda k: abs(p.delta - anchors[k])) for p in fps.stable]
    if len(set(labels)) != len(labels):
        # fall back on order for crowded configurations
        labels = {1: [MID], 2: [LOW, HIGH], 3: [LOW, MID, HIGH]}[len(labels)]
    return labels


@dataclass(frozen=True)
class PeakLevels:
    fixed_points: FixedPointSet
    labels: tuple[str, ...]
    up: tuple[float, ...]    # S*(i -> i+1)
    down: tuple[float, ...]  # S*(i+1 -> i)
    levels: tuple[float, ...]

    @property
    def dominant(self) -> int:
        return int(np.argmin(self.levels))

    def dominant_deltas(self):
        return [p.delta for p in self.fixed_points.stable]


def peak_levels(fps: FixedPointSet, n_steps: int = DEFAULT_N_STEPS,
                t_span: float = DEFAULT_T_SPAN) -> PeakLevels:
    """Quasi-potential levels ``W_i`` of the stable points of a one-dimensional chain."""
    st = fps.stable
    model = EWAModel(fps.payoffs, fps.learning.alpha, fps.learning.beta)
    up, down = [], []
    for i in range(len(st) - 1):
        sad = np.array(fps.saddle_between(i, i + 1).state)
        up.append(minimize_action(model, np.array(st[i].state), sad, n_steps, t_span).min_action)
        down.append(minimize_action(model, np.array(st[i + 1].state), sad, n_steps, t_span).min_action)
    levels = [sum(up[:i]) + sum(down[i:]) for i in range(len(st))]
    return PeakLevels(fps, tuple(label_stable_points(fps)), tuple(up), tuple(down), tuple(levels))


def _fixed_points_sym(x: float, params: GameParams, learning: LearningParams) -> FixedPointSet:
    return fixed_points(Aggregates(x, 1.0 - x), params, learning, 1)


def coexistence_aggregate(labels: tuple[str, str], params: GameParams, learning: LearningParams,
                          bracket: tuple[float, float], tol: float = 1e-6,
                          n_steps: int = DEFAULT_N_STEPS, t_span: float = DEFAULT_T_SPAN) -> Aggregates:
    """Symmetric aggregate where the two labelled peaks have equal quasi-potential.

    ``labels`` names two stable points (``"low"``, ``"mid"``, ``"high"``) that must
    exist throughout the bracket.
    """

    def gap(x):
        lv = peak_levels(_fixed_points_sym(x, params, learning), n_steps, t_span)
        idx = {lab: k for k, lab in enumerate(lv.labels)}
        if labels[0] not in idx or labels[1] not in idx:
            raise NoCoexistenceError(f"peaks {labels} do not both exist at pbar={x:.6g}")
        return lv.levels[idx[labels[0]]] - lv.levels[idx[labels[1]]]

    lo, hi = bracket
    g_lo, g_hi = gap(lo), gap(hi)
    if np.sign(g_lo) == np.sign(g_hi):
        raise NoCoexistenceError("action difference has one sign over the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        g = gap(mid)
        if np.sign(g) == np.sign(g_lo):
            lo, g_lo = mid, g
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    return Aggregates(x, 1.0 - x)


class TildeP(NamedTuple):
    """Market-1 probability of the dominant peak(s) at one symmetric aggregate."""

    value: float
    levels: PeakLevels | None


def tilde_p(x: float, params: GameParams, learning: LearningParams,
            n_steps: int = DEFAULT_N_STEPS, t_span: float = DEFAULT_T_SPAN) -> TildeP:
    fps = _fixed_points_sym(x, params, learning)
    st = fps.stable
    if len(st) == 1:
        return TildeP(float(softmax_choice(st[0].delta, learning.beta)), None)
    lv = peak_levels(fps, n_steps, t_span)
    return TildeP(float(softmax_choice(st[lv.dominant].delta, learning.beta)), lv)


@dataclass(frozen=True)
class TildePCurve:
    x: np.ndarray
    p: np.ndarray
    switches: tuple[float, ...]


def tilde_p_curve(params: GameParams, learning: LearningParams, grid, n_steps: int = DEFAULT_N_STEPS,
                  t_span: float = DEFAULT_T_SPAN, switch_tol: float = 1e-6) -> TildePCurve:
    """``p_tilde`` over a grid of symmetric aggregates, with switch points located by bisection.

    A switch is a change of the dominant peak between adjacent grid points; at
    the switch location the curve is vertical and both values are recorded.
    """
    grid = np.asarray(sorted(grid), float)
    vals = [tilde_p(x, params, learning, n_steps, t_span) for x in grid]

    def dom(t: TildeP):
        return None if t.levels is None else t.levels.labels[t.levels.dominant]

    def dom_label(t: TildeP):
        return MID if t.levels is None else dom(t)

    xs, ps, switches = [], [], []
    for k, x in enumerate(grid):
        if k > 0 and dom_label(vals[k]) != dom_label(vals[k - 1]):
            lo, hi = grid[k - 1], x
            a, b = vals[k - 1], vals[k]
            while hi - lo > switch_tol:
                mid = 0.5 * (lo + hi)
                m = tilde_p(mid, params, learning, n_steps, t_span)
                if dom_label(m) == dom_label(a):
                    lo, a = mid, m
                else:
                    hi, b = mid, m
            s = 0.5 * (lo + hi)
            switches.append(s)
            xs += [s, s]
            ps += [a.value, b.value]
        xs.append(x)
        ps.append(vals[k].value)
    return TildePCurve(np.array(xs), np.array(ps), tuple(switches))


# --- steady states ---------------------------------------------------------------

class Peak(NamedTuple):
    label: str
    point: FixedPoint
    weight: float


@dataclass(frozen=True)
class SteadyStateSolution:
    aggregates: Aggregates
    peaks: tuple[Peak, ...]
    kind: str
    levels: tuple[float, ...] = ()
    switch: bool = False
    notes: dict = field(default_factory=dict)

    def peak_list(self, beta: float) -> list[tuple[float, float]]:
        return [(p.point.delta, p.weight) for p in self.peaks]


def _kind_of(labels: Sequence[str]) -> str:
    s = set(labels)
    if len(s) == 1:
        return HOMOGENEOUS_MIXED
    if len(s) == 3:
        return THREE_PEAK
    return HETEROGENEOUS_MIXED if MID in s else HETEROGENEOUS_PURE


def solve_steady_state(params: GameParams, learning: LearningParams, tol: float = 1e-7,
                       n_steps: int = DEFAULT_N_STEPS, t_span: float = DEFAULT_T_SPAN,
                       jump_tol: float = 1e-3, three_peak_tol: float = 1e-4) -> SteadyStateSolution:
    """Self-consistent symmetric steady state in the ``r -> 0`` limit.

    Bisection on ``h(x) = p_tilde(x) - x`` along ``pbar_2 = 1 - pbar_1``.  If ``p_tilde``
    jumps at the root, two peaks coexist there and their weights are fixed by
    ``x = w p_i + (1 - w) p_j``.  A third peak whose quasi-potential lies within
    ``three_peak_tol`` of the dominant level is reported as a three-peak state with the
    weights left undetermined.
    """
    if not params.is_symmetric():
        raise ValueError("steady states are solved for symmetric setups only")
    beta = learning.beta
    lo, hi = 0.0, 1.0
    t_lo = tilde_p(lo, params, learning, n_steps, t_span)
    t_hi = tilde_p(hi, params, learning, n_steps, t_span)
    h_lo = t_lo.value - lo
    if h_lo <= 0 or t_hi.value - hi >= 0:
        raise ValueError("p_tilde does not bracket the diagonal")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        t = tilde_p(mid, params, learning, n_steps, t_span)
        if t.value - mid > 0:
            lo, t_lo = mid, t
        else:
            hi, t_hi = mid, t
    x = 0.5 * (lo + hi)
    aggr = Aggregates(x, 1.0 - x)
    fps = _fixed_points_sym(x, params, learning)
    st = fps.stable
    if len(st) == 1:
        pk = Peak(MID, st[0], 1.0)
        return SteadyStateSolution(aggr, (pk,), HOMOGENEOUS_MIXED)
    lv = peak_levels(fps, n_steps, t_span)
    if abs(t_lo.value - t_hi.value) < jump_tol:
        i = lv.dominant
        return SteadyStateSolution(aggr, (Peak(lv.labels[i], st[i], 1.0),), HOMOGENEOUS_MIXED, lv.levels)

    # switch: dominant peaks on either side of the root
    def dom_label(t: TildeP):
        return MID if t.levels is None else t.levels.labels[t.levels.dominant]

    la, lb = dom_label(t_lo), dom_label(t_hi)
    idx = {lab: k for k, lab in enumerate(lv.labels)}
    if la not in idx or lb not in idx or la == lb:
        raise ValueError("inconsistent switch: peaks missing at the root")
    ia, ib = idx[la], idx[lb]
    pa = float(softmax_choice(st[ia].delta, beta))
    pb_ = float(softmax_choice(st[ib].delta, beta))
    w = (x - pb_) / (pa - pb_)
    if not -1e-9 <= w <= 1 + 1e-9:
        raise ValueError(f"inconsistent switch: weight {w:.4g} outside [0, 1]")
    w = min(max(w, 0.0), 1.0)
    peaks = [Peak(la, st[ia], w), Peak(lb, st[ib], 1.0 - w)]
    wmin = min(lv.levels[ia], lv.levels[ib])
    others = [k for k in range(len(st)) if k not in (ia, ib)]
    if others and abs(lv.levels[others[0]] - wmin) <= three_peak_tol:
        k = others[0]
        peaks.append(Peak(lv.labels[k], st[k], 0.0))
        peaks.sort(key=lambda p: p.point.delta)
        return SteadyStateSolution(aggr, tuple(peaks), THREE_PEAK, lv.levels, True,
                                   {"weights": "undetermined one-parameter family"})
    peaks.sort(key=lambda p: p.point.delta)
    return SteadyStateSolution(aggr, tuple(peaks), _kind_of([la, lb]), lv.levels, True)


class CriticalAlphas(NamedTuple):
    alpha_c: float
    alpha_c_prime: float
    alpha_c_dprime: float


def _is_het(kind: str) -> bool:
    return kind != HOMOGENEOUS_MIXED


def critical_alphas(beta: float, params: GameParams, alpha_range=(1e-4, 0.5), n_grid: int = 24,
                    rtol: float = 1e-4, n_steps: int = DEFAULT_N_STEPS,
                    t_span: float = DEFAULT_T_SPAN) -> CriticalAlphas:
    """Thresholds ``alpha_c`` (onset of heterogeneity), ``alpha_c'`` (mixed to pure) and
    ``alpha_c''`` (central fixed point vanishes at the solved aggregates).

    A coarse log-spaced scan in alpha is refined by bisection in ``log alpha``.
    Thresholds that do not occur in the scanned range are ``nan``.
    """
    base = LearningParams(r=0.01, alpha=alpha_range[0], beta=beta)
    cache: dict[float, SteadyStateSolution] = {}

    def solve(al):
        if al not in cache:
            cache[al] = solve_steady_state(params, base.replace(alpha=al), n_steps=n_steps, t_span=t_span)
        return cache[al]

    def n_stable(al):
        sol = solve(al)
        return len(_fixed_points_sym(sol.aggregates[0], params, base.replace(alpha=al)).stable)

    grid = np.exp(np.linspace(math.log(alpha_range[0]), math.log(alpha_range[1]), n_grid))
    kinds = [solve(a).kind for a in grid]

    def refine(pred, lo, hi):
        p_lo = pred(lo)
        llo, lhi = math.log(lo), math.log(hi)
        while lhi - llo > rtol:
            m = 0.5 * (llo + lhi)
            if pred(math.exp(m)) == p_lo:
                llo = m
            else:
                lhi = m
        return math.exp(0.5 * (llo + lhi))

    def first_change(pred):
        flags = [pred(a) for a in grid]
        for k in range(len(grid) - 1):
            if flags[k] != flags[k + 1]:
                return refine(pred, grid[k], grid[k + 1])
        return math.nan

    if not any(_is_het(k) for k in kinds):
        raise EmptyWedgeError(f"no heterogeneous steady state for alpha in {alpha_range} at beta={beta:.4g}")
    a_c = first_change(lambda a: _is_het(solve(a).kind))
    a_cp = first_change(lambda a: solve(a).kind == HETEROGENEOUS_PURE)
    # saddle-node of the central point, beyond the last alpha with three stable points
    three = [k for k, a in enumerate(grid) if n_stable(a) == 3]
    if three and three[-1] + 1 < len(grid):
        k = three[-1]
        a_cpp = refine(lambda a: n_stable(a) == 3, grid[k], grid[k + 1])
    else:
        a_cpp = math.nan
    return CriticalAlphas(a_c, a_cp, a_cpp)
