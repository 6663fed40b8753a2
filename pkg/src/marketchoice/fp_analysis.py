"""
Single-agent Fokker-Planck analysis of EWA learning at frozen aggregates.

For small ``r`` the attraction pair ``(A_1, A_2)`` of one trader performs a
jump process whose first two jump moments define the drift ``mu`` and the
diffusion matrix ``Sigma``.  Fixed points of the drift all lie on a curve
parametrized by ``Delta = A_1 - A_2`` and solve one scalar equation; stable
fixed points become Gaussian peaks of width ``O(sqrt(r))`` in the stationary
distribution.

The ``*_from_payoffs`` functions are the vectorized kernels; they accept
attraction arrays of shape ``(..., 2)`` and the per-market payoff means ``P``
and mean squares ``Q`` of one class.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_continuous_lyapunov
from scipy.optimize import brentq, minimize_scalar
from scipy.special import expit

from .market_core import Aggregates, GameParams, payoff_grid

STABLE = "stable"
UNSTABLE = "unstable"
STABILITY_TOL = 1e-10
DELTA_SCAN_POINTS = 4096


class NoFixedPointError(ArithmeticError):
    """The fixed-point equation has no root in its bracket (cannot happen for valid input)."""


class MissingTransitionError(ArithmeticError):
    """The fixed-point count never changes over the scanned range of alpha."""


class StiffnessError(ArithmeticError):
    """The ODE integrator could not advance."""


@dataclass(frozen=True)
class LearningParams:
    """EWA learning rates.

    ``r`` is the per-round forgetting rate, ``alpha`` the decay applied to the
    attraction of the market not visited and ``beta`` the softmax intensity.
    """

    r: float = 0.01
    alpha: float = 0.01
    beta: float = 1.0 / 0.11

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"r must lie in [0, 1], got {self.r!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha!r}")
        if not self.beta > 0.0 or not math.isfinite(self.beta):
            raise ValueError(f"beta must be positive and finite, got {self.beta!r}")

    @property
    def log_scale(self) -> float:
        """``a`` with ``alpha = exp(-a * beta)``; infinite at ``alpha = 0``."""
        return math.inf if self.alpha == 0.0 else -math.log(self.alpha) / self.beta

    def replace(self, **changes) -> "LearningParams":
        d = dict(r=self.r, alpha=self.alpha, beta=self.beta)
        d.update(changes)
        return LearningParams(**d)

    def to_dict(self) -> dict:
        return dict(r=self.r, alpha=self.alpha, beta=self.beta)

    @classmethod
    def from_dict(cls, d: dict) -> "LearningParams":
        unknown = set(d) - {"r", "alpha", "beta"}
        if unknown:
            raise ValueError(f"unknown LearningParams keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


class AttractionState(NamedTuple):
    A_1: float
    A_2: float

    @property
    def delta(self) -> float:
        return self.A_1 - self.A_2


class ClassPayoffs(NamedTuple):
    """Per-market payoff means and mean squares for one class at fixed aggregates."""

    P: np.ndarray
    Q: np.ndarray


def softmax_choice(delta, beta):
    """Probability of choosing market 1 given the attraction difference."""
    return expit(beta * np.asarray(delta, dtype=float))


def class_payoffs_at(aggr: Aggregates, params: GameParams, c: int = 1) -> ClassPayoffs:
    if c not in (1, 2):
        raise ValueError(f"class index must be 1 or 2, got {c!r}")
    P, Q = payoff_grid(aggr[0], aggr[1], params)
    return ClassPayoffs(np.array(P[c - 1], float), np.array(Q[c - 1], float))


# --- jump moments --------------------------------------------------------------

def _split(A):
    A = np.asarray(A, dtype=float)
    return A[..., 0], A[..., 1]


def drift_from_payoffs(A, P, alpha: float, beta: float):
    A1, A2 = _split(A)
    s = expit(beta * (A1 - A2))
    mu1 = (P[0] - A1) * s - alpha * A1 * (1.0 - s)
    mu2 = (P[1] - A2) * (1.0 - s) - alpha * A2 * s
    return np.stack([mu1, mu2], axis=-1)


def diffusion_from_payoffs(A, P, Q, alpha: float, beta: float):
    """Second jump moments per unit ``r^2``; shape ``(..., 2, 2)``.

    These are raw second moments of the scaled jump, so the drift's square is not subtracted.
    """
    A1, A2 = _split(A)
    s = expit(beta * (A1 - A2))
    a2 = alpha * alpha
    s11 = (Q[0] - 2.0 * A1 * P[0] + A1 * A1) * s + a2 * A1 * A1 * (1.0 - s)
    s22 = (Q[1] - 2.0 * A2 * P[1] + A2 * A2) * (1.0 - s) + a2 * A2 * A2 * s
    s12 = -alpha * (P[0] * A2 * s + P[1] * A1 * (1.0 - s) - A1 * A2)
    out = np.empty(np.shape(A1) + (2, 2))
    out[..., 0, 0] = s11
    out[..., 1, 1] = s22
    out[..., 0, 1] = s12
    out[..., 1, 0] = s12
    return out


def jacobian_from_payoffs(A, P, alpha: float, beta: float):
    """``J[..., i, j] = d mu_i / d A_j``."""
    A1, A2 = _split(A)
    s = expit(beta * (A1 - A2))
    ds = beta * s * (1.0 - s)
    out = np.empty(np.shape(A1) + (2, 2))
    out[..., 0, 0] = -s + (P[0] - A1) * ds - alpha * (1.0 - s) + alpha * A1 * ds
    out[..., 0, 1] = -(P[0] - A1) * ds - alpha * A1 * ds
    out[..., 1, 0] = -(P[1] - A2) * ds - alpha * A2 * ds
    out[..., 1, 1] = -(1.0 - s) + (P[1] - A2) * ds - alpha * s + alpha * A2 * ds
    return out


def diffusion_gradient_from_payoffs(A, P, Q, alpha: float, beta: float):
    """``G[..., i, j, k] = d Sigma_ij / d A_k``."""
    A1, A2 = _split(A)
    s = expit(beta * (A1 - A2))
    ds = beta * s * (1.0 - s)
    a2 = alpha * alpha
    g1 = Q[0] - 2.0 * A1 * P[0] + A1 * A1
    g2 = Q[1] - 2.0 * A2 * P[1] + A2 * A2
    out = np.empty(np.shape(A1) + (2, 2, 2))
    out[..., 0, 0, 0] = (2.0 * A1 - 2.0 * P[0]) * s + g1 * ds + 2.0 * a2 * A1 * (1.0 - s) - a2 * A1 * A1 * ds
    out[..., 0, 0, 1] = -g1 * ds + a2 * A1 * A1 * ds
    out[..., 1, 1, 0] = -g2 * ds + a2 * A2 * A2 * ds
    out[..., 1, 1, 1] = (2.0 * A2 - 2.0 * P[1]) * (1.0 - s) + g2 * ds + 2.0 * a2 * A2 * s - a2 * A2 * A2 * ds
    d12_1 = -alpha * (P[0] * A2 * ds + P[1] * (1.0 - s) - P[1] * A1 * ds - A2)
    d12_2 = -alpha * (P[0] * s - P[0] * A2 * ds + P[1] * A1 * ds - A1)
    out[..., 0, 1, 0] = out[..., 1, 0, 0] = d12_1
    out[..., 0, 1, 1] = out[..., 1, 0, 1] = d12_2
    return out


def drift(A, aggr: Aggregates, params: GameParams, learning: LearningParams, c: int = 1):
    """Drift of the attraction pair of a class-``c`` trader at frozen aggregates."""
    pay = class_payoffs_at(aggr, params, c)
    return drift_from_payoffs(A, pay.P, learning.alpha, learning.beta)


def diffusion(A, aggr: Aggregates, params: GameParams, learning: LearningParams, c: int = 1):
    """Diffusion matrix (second jump moments over ``r^2``) at frozen aggregates."""
    pay = class_payoffs_at(aggr, params, c)
    return diffusion_from_payoffs(A, pay.P, pay.Q, learning.alpha, learning.beta)


def jacobian(A, aggr: Aggregates, params: GameParams, learning: LearningParams, c: int = 1):
    pay = class_payoffs_at(aggr, params, c)
    return jacobian_from_payoffs(A, pay.P, learning.alpha, learning.beta)


# --- fixed points --------------------------------------------------------------

class FixedPoint(NamedTuple):
    state: AttractionState
    delta: float
    stability: str
    jacobian: np.ndarray
    peak_covariance: np.ndarray | None

    @property
    def stable(self) -> bool:
        return self.stability == STABLE


@dataclass(frozen=True)
class FixedPointSet:
    """Fixed points ordered by increasing ``delta``."""

    points: tuple[FixedPoint, ...]
    payoffs: ClassPayoffs
    learning: LearningParams

    @property
    def stable(self) -> list[FixedPoint]:
        return [p for p in self.points if p.stable]

    @property
    def unstable(self) -> list[FixedPoint]:
        return [p for p in self.points if not p.stable]

    def __len__(self) -> int:
        return len(self.points)

    def saddle_between(self, i: int, j: int) -> FixedPoint:
        """Unstable point between the ``i``-th and ``j``-th stable points."""
        st = self.stable
        lo, hi = sorted((st[i].delta, st[j].delta))
        between = [p for p in self.unstable if lo < p.delta < hi]
        if len(between) != 1 or abs(i - j) != 1:
            raise ValueError("stable points are not adjacent")
        return between[0]


def _delta_residual(delta, P, a: float, beta: float):
    return (P[0] * expit(beta * (delta + a)) - P[1] * expit(-beta * (delta - a))) - delta


def _reconstruct(delta: float, P, a: float, beta: float) -> AttractionState:
    return AttractionState(float(P[0] * expit(beta * (delta + a))),
                           float(P[1] * expit(-beta * (delta - a))))


def delta_roots(P, alpha: float, beta: float, n_scan: int = DELTA_SCAN_POINTS) -> list[float]:
    """Roots of the scalar fixed-point equation in ``Delta``, increasing.

    A dense scan finds sign changes; local extrema of the residual are also refined
    so that pairs of nearly tangent roots between two scan points are not missed.
    """
    P = np.asarray(P, dtype=float)
    if alpha == 0.0:
        return [float(P[0] - P[1])]
    a = -math.log(alpha) / beta
    lo, hi = -P[1] - 1.0, P[0] + 1.0
    x = np.linspace(lo, hi, n_scan)
    g = _delta_residual(x, P, a, beta)
    fun = lambda d: float(_delta_residual(d, P, a, beta))
    brackets = [(x[k], x[k + 1]) for k in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]]
    exact = [float(x[k]) for k in np.nonzero(g == 0.0)[0]]
    # extrema that do not straddle zero on the grid may still hide two roots
    dg = np.diff(g)
    for k in np.nonzero(np.sign(dg[:-1]) * np.sign(dg[1:]) < 0)[0] + 1:
        if g[k - 1] * g[k + 1] <= 0 or g[k] * g[k - 1] <= 0:
            continue
        sgn = 1.0 if dg[k - 1] > 0 else -1.0  # +1 at a maximum
        res = minimize_scalar(lambda d: -sgn * fun(d), bounds=(x[k - 1], x[k + 1]),
                              method="bounded", options={"xatol": 1e-14})
        ext = float(res.x)
        if np.sign(fun(ext)) != np.sign(g[k]):
            brackets += [(x[k - 1], ext), (ext, x[k + 1])]
    roots = [brentq(fun, a_, b_, xtol=1e-14, rtol=4 * np.finfo(float).eps) for a_, b_ in brackets]
    roots = sorted(roots + exact)
    if not roots:
        raise NoFixedPointError("no root of the fixed-point equation")
    return roots


def _classify_point(state: AttractionState, pay: ClassPayoffs, learning: LearningParams) -> FixedPoint:
    A = np.array(state)
    J = jacobian_from_payoffs(A, pay.P, learning.alpha, learning.beta)
    ev = np.linalg.eigvals(J)
    stable = bool(np.all(ev.real < -STABILITY_TOL))
    cov = None
    if stable:
        S = diffusion_from_payoffs(A, pay.P, pay.Q, learning.alpha, learning.beta)
        cov = solve_continuous_lyapunov(J, -learning.r * S)
        cov = 0.5 * (cov + cov.T)
    return FixedPoint(state, state.A_1 - state.A_2, STABLE if stable else UNSTABLE, J, cov)


def fixed_points_from_payoffs(pay: ClassPayoffs, learning: LearningParams,
                              n_scan: int = DELTA_SCAN_POINTS) -> FixedPointSet:
    P = np.asarray(pay.P, float)
    if learning.alpha == 0.0:
        pts = [_classify_point(AttractionState(float(P[0]), float(P[1])), pay, learning)]
        return FixedPointSet(tuple(pts), pay, learning)
    a = learning.log_scale
    pts = [_classify_point(_reconstruct(d, P, a, learning.beta), pay, learning)
           for d in delta_roots(P, learning.alpha, learning.beta, n_scan)]
    return FixedPointSet(tuple(pts), pay, learning)


def fixed_points(aggr: Aggregates, params: GameParams, learning: LearningParams,
                 c: int = 1, n_scan: int = DELTA_SCAN_POINTS) -> FixedPointSet:
    """Fixed points of the class-``c`` drift, their stability and peak covariances."""
    return fixed_points_from_payoffs(class_payoffs_at(aggr, params, c), learning, n_scan)


def aggregates_from_peaks(peaks: Sequence[Sequence[tuple[float, float]]], beta: float) -> Aggregates:
    """Class aggregates from per-class lists of ``(delta, weight)`` peaks.

    Peaks are treated as point masses, which is exact for ``r -> 0``.
    """
    if len(peaks) != 2:
        raise ValueError("need one peak list per class")
    out = []
    for plist in peaks:
        d = np.array([p[0] for p in plist], float)
        w = np.array([p[1] for p in plist], float)
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("peak weights must be nonnegative and sum to 1")
        out.append(float(np.dot(w, softmax_choice(d, beta))))
    return Aggregates(*out)


# --- homogeneous populations ---------------------------------------------------

def _scan_roots(fun, lo, hi, n):
    """Roots by scan plus brentq; ``fun`` may return nan where it is undefined."""
    x = np.linspace(lo, hi, n + 1)
    v = np.array([fun(t) for t in x])
    roots = [float(x[k]) for k in np.nonzero(v == 0.0)[0]]
    for k in np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]:
        try:
            root = brentq(fun, x[k], x[k + 1], xtol=1e-13)
        except ValueError:
            continue
        if math.isfinite(fun(root)):
            roots.append(root)
    return sorted(roots)


@dataclass(frozen=True)
class SelfConsistentState:
    aggregates: Aggregates
    fixed_points: tuple[FixedPointSet, FixedPointSet]
    kind: str
    all_solutions: tuple[float, ...] = field(default=())

    @property
    def multiple(self) -> bool:
        return len(self.all_solutions) > 1


def homogeneous_tilde_p(x: float, params: GameParams, learning: LearningParams) -> float:
    """Class-1 market-1 probability at the single drift fixed point, at aggregates ``(x, 1-x)``."""
    fps = fixed_points(Aggregates(x, 1.0 - x), params, learning, 1)
    st = fps.stable
    if len(st) != 1:
        raise ValueError(f"expected a single stable fixed point, found {len(st)}")
    return float(softmax_choice(st[0].delta, learning.beta))


def homogeneous_self_consistent(params: GameParams, learning: LearningParams,
                                symmetric: bool = True, n_scan: int = 200) -> SelfConsistentState:
    """Aggregates of a population in which every trader sits at the unique drift fixed point.

    Solves ``x = sigma_beta(Delta*(x, 1 - x))`` on the anti-diagonal.  When several
    solutions exist the one closest to ``1/2`` is reported and the rest are listed.
    """
    if not symmetric:
        raise NotImplementedError("only the symmetric mode is supported")
    if not params.is_symmetric():
        raise ValueError("symmetric mode needs a symmetric setup")
    def fun(x):
        try:
            return homogeneous_tilde_p(x, params, learning) - x
        except ValueError:  # several stable points: no homogeneous state here
            return math.nan

    roots = _scan_roots(fun, 0.0, 1.0, n_scan)
    if not roots:
        raise NoFixedPointError("no self-consistent aggregate")
    x = min(roots, key=lambda t: abs(t - 0.5))
    aggr = Aggregates(x, 1.0 - x)
    fps = (fixed_points(aggr, params, learning, 1), fixed_points(aggr, params, learning, 2))
    pure = min(x, 1.0 - x) < 1e-6
    return SelfConsistentState(aggr, fps, "homogeneous_pure_limit" if pure else "homogeneous_mixed",
                               tuple(roots))


@dataclass(frozen=True)
class PopulationTrajectory:
    t: np.ndarray
    attractions: np.ndarray  # (n_t, class, market)
    aggregates: np.ndarray  # (n_t, class)
    converged: bool


def homogeneous_population_dynamics(initial: Sequence[AttractionState], params: GameParams,
                                    learning: LearningParams, t_end: float, tolerance: float = 1e-8,
                                    t_eval=None, stationary_tol: float = 1e-8) -> PopulationTrajectory:
    """Deterministic flow of two homogeneous classes whose aggregates follow their own choices.

    Each class is represented by one attraction pair; the aggregates are the
    softmax choice probabilities of the two pairs, and time is ``t = r n``.
    """
    alpha, beta = learning.alpha, learning.beta

    def rhs(_t, y):
        A = y.reshape(2, 2)
        pbar = expit(beta * (A[:, 0] - A[:, 1]))
        P, _ = payoff_grid(pbar[0], pbar[1], params)
        return np.concatenate([drift_from_payoffs(A[c], P[c], alpha, beta) for c in range(2)])

    y0 = np.array(initial, dtype=float).reshape(4)
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="RK45", rtol=tolerance, atol=tolerance * 1e-2,
                    t_eval=t_eval, dense_output=False)
    if sol.status < 0:
        raise StiffnessError(sol.message)
    A = sol.y.T.reshape(-1, 2, 2)
    pbar = expit(beta * (A[..., 0] - A[..., 1]))
    conv = float(np.max(np.abs(rhs(sol.t[-1], sol.y[:, -1])))) < stationary_tol
    return PopulationTrajectory(sol.t, A, pbar, conv)


# --- fixed-point-count thresholds ----------------------------------------------

class CountThresholds(NamedTuple):
    alpha_1to3: float
    alpha_3to5: float
    alpha_back_to_3: float


def fixed_point_count(P, alpha: float, beta: float) -> int:
    return len(delta_roots(P, alpha, beta))


def _bisect_log_alpha(pred, lo, hi, rtol=1e-6):
    """Boundary between ``pred(lo)`` and ``not pred(lo)`` by bisection in ``log alpha``."""
    p_lo = pred(lo)
    llo, lhi = math.log(lo), math.log(hi)
    while lhi - llo > rtol:
        mid = 0.5 * (llo + lhi)
        if pred(math.exp(mid)) == p_lo:
            llo = mid
        else:
            lhi = mid
    return math.exp(0.5 * (llo + lhi))


def threshold_alphas_from_payoffs(P, beta: float, alpha_min: float = 1e-300,
                                  n_grid: int = 400) -> CountThresholds:
    """Values of alpha where the fixed-point count goes 1 -> 3, 3 -> 5 and 5 -> 3.

    Missing transitions are reported as ``nan``; raises if the count never changes.
    """
    P = np.asarray(P, float)
    logs = np.linspace(math.log(alpha_min), 0.0, n_grid)
    counts = np.array([fixed_point_count(P, math.exp(x), beta) for x in logs])
    if np.all(counts == counts[0]):
        raise MissingTransitionError(f"fixed-point count is {counts[0]} over the whole alpha range")

    def crossing(pred):
        flags = np.array([pred(c) for c in counts])
        k = np.nonzero(~flags[:-1] & flags[1:])[0]
        if k.size == 0:
            return math.nan
        k = k[0]
        return _bisect_log_alpha(lambda al: pred(fixed_point_count(P, al, beta)),
                                 math.exp(logs[k]), math.exp(logs[k + 1]))

    a13 = crossing(lambda c: c >= 3)
    a35 = crossing(lambda c: c >= 5)
    # last alpha with five fixed points
    five = np.nonzero(counts >= 5)[0]
    if five.size and five[-1] + 1 < len(logs):
        k = five[-1]
        a53 = _bisect_log_alpha(lambda al: fixed_point_count(P, al, beta) >= 5,
                                math.exp(logs[k]), math.exp(logs[k + 1]))
    else:
        a53 = math.nan
    return CountThresholds(a13, a35, a53)


def threshold_alphas_fixed_point_count(beta: float, params: GameParams, aggr: Aggregates,
                                       c: int = 1) -> CountThresholds:
    """Fixed-point-count thresholds in alpha for class ``c`` at frozen aggregates."""
    return threshold_alphas_from_payoffs(class_payoffs_at(aggr, params, c).P, beta)
