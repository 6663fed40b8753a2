"""
Agent-based simulation of EWA traders choosing between two double-auction markets.

Each round every agent picks a market by softmax on its attractions, decides to
buy with its class's probability and draws an order price.  Each market sets
its price from the realized mean bid and ask, rejects orders on the wrong side,
pairs valid bids and asks uniformly at random, and pays matched orders
``|price - pi|``.  Attractions are then updated by the EWA rule.

Random numbers come from counter-based Philox streams keyed by
``(seed, round, stream)``, so each round's draws are independent of how many
draws earlier rounds consumed and the full trace is bit-reproducible.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .fp_analysis import LearningParams
from .market_core import Aggregates, GameParams, market_constants, trading_price

# stream ids within a round
_CHOICE, _SIDE, _PRICE, _PAIR = 0, 1, 2, 3


def round_rng(seed: int, rnd: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, rnd, stream])))


@dataclass(frozen=True)
class SimConfig:
    n_agents: int = 20000
    params: GameParams = field(default_factory=GameParams)
    learning: LearningParams = field(default_factory=LearningParams)
    n_rounds: int = 1000
    seed: int = 0
    snapshot_times: tuple[float, ...] = ()
    initial_attractions: tuple[float, float] = (0.0, 0.0)
    record_every: int = 1

    def __post_init__(self):
        if self.n_agents < 2 or self.n_agents % 2:
            raise ValueError("n_agents must be even and at least 2")
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be at least 1")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")
        t_max = self.learning.r * self.n_rounds
        for t in self.snapshot_times:
            if not 0.0 <= t <= t_max + 1e-12:
                raise ValueError(f"snapshot time {t} outside [0, {t_max}]")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return dict(n_agents=self.n_agents, params=self.params.to_dict(), learning=self.learning.to_dict(),
                    n_rounds=self.n_rounds, seed=self.seed, snapshot_times=list(self.snapshot_times),
                    initial_attractions=list(self.initial_attractions), record_every=self.record_every)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        known = {"n_agents", "params", "learning", "n_rounds", "seed", "snapshot_times",
                 "initial_attractions", "record_every"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown SimConfig keys: {sorted(unknown)}")
        if "params" in d:
            d["params"] = GameParams.from_dict(d["params"])
        if "learning" in d:
            d["learning"] = LearningParams.from_dict(d["learning"])
        for k in ("n_agents", "n_rounds", "seed", "record_every"):
            if k in d:
                d[k] = int(d[k])
        if "snapshot_times" in d:
            d["snapshot_times"] = tuple(float(t) for t in d["snapshot_times"])
        if "initial_attractions" in d:
            d["initial_attractions"] = tuple(float(a) for a in d["initial_attractions"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class Population:
    """Agents' classes (0 or 1) and attraction pairs, plus last round's realized aggregates."""

    cls: np.ndarray
    A: np.ndarray
    pbar: np.ndarray = field(default_factory=lambda: np.full(2, np.nan))

    @classmethod
    def uniform(cls, n_agents: int, attractions=(0.0, 0.0)) -> "Population":
        c = np.repeat(np.array([0, 1]), n_agents // 2)
        A = np.tile(np.asarray(attractions, float), (n_agents, 1))
        return cls(c, A)

    @property
    def delta(self) -> np.ndarray:
        return self.A[:, 0] - self.A[:, 1]

    def class_size(self, c: int) -> int:
        return int(np.sum(self.cls == c - 1))


class RoundStats(NamedTuple):
    pbar: np.ndarray       # realized fraction choosing market 1, per class
    pi: np.ndarray         # trading price per market, nan if no trading
    matched: np.ndarray    # matched pairs per market


class Orders(NamedTuple):
    market: np.ndarray  # 0 or 1
    buy: np.ndarray     # bool
    price: np.ndarray


def draw_orders(pop: Population, params: GameParams, beta: float, seed: int, rnd: int) -> Orders:
    n = len(pop.cls)
    p1 = expit(beta * pop.delta)
    market = (round_rng(seed, rnd, _CHOICE).random(n) >= p1).astype(np.int8)
    pb = np.array(params.pbs)[pop.cls]
    buy = round_rng(seed, rnd, _SIDE).random(n) < pb
    z = round_rng(seed, rnd, _PRICE).standard_normal(n)
    price = np.where(buy, params.mu_b + params.sigma_b * z, params.mu_a + params.sigma_a * z)
    return Orders(market, buy, price)


def clear_market(price: np.ndarray, buy: np.ndarray, theta: float, rng: np.random.Generator,
                 pi: float | None = None):
    """Clear one market.  Returns ``(scores, pi, matched_pairs)``.

    With no bids or no asks nothing trades and ``pi`` is ``nan``.  ``pi`` may be
    imposed instead of computed from the realized order means.
    """
    scores = np.zeros(len(price))
    n_b = int(buy.sum())
    if pi is None:
        if n_b == 0 or n_b == len(price):
            return scores, math.nan, 0
        pi = float(trading_price(theta, price[buy].mean(), price[~buy].mean()))
    vb = np.nonzero(buy & (price > pi))[0]
    va = np.nonzero(~buy & (price < pi))[0]
    k = min(len(vb), len(va))
    if k:
        # uniform random pairing: the scarce side is fully matched, a random subset of the other
        if len(vb) > k:
            vb = rng.permutation(vb)[:k]
        elif len(va) > k:
            va = rng.permutation(va)[:k]
        scores[vb] = price[vb] - pi
        scores[va] = pi - price[va]
    return scores, pi, k


def ewa_update(A: np.ndarray, market: np.ndarray, score: np.ndarray, r: float, alpha: float) -> np.ndarray:
    """EWA step: the chosen attraction moves toward the score, the other decays by ``1 - alpha r``."""
    out = A * (1.0 - alpha * r)
    rows = np.arange(len(A))
    out[rows, market] = (1.0 - r) * A[rows, market] + r * score
    return out


def run_round(pop: Population, params: GameParams, learning: LearningParams, seed: int,
              rnd: int) -> tuple[Population, RoundStats]:
    orders = draw_orders(pop, params, learning.beta, seed, rnd)
    scores = np.zeros(len(pop.cls))
    pis = np.full(2, math.nan)
    matched = np.zeros(2, dtype=np.int64)
    pair_rng = round_rng(seed, rnd, _PAIR)
    for k in range(2):
        idx = np.nonzero(orders.market == k)[0]
        s, pis[k], matched[k] = clear_market(orders.price[idx], orders.buy[idx], params.thetas[k], pair_rng)
        scores[idx] = s
    in1 = orders.market == 0
    pbar = np.array([in1[pop.cls == c].mean() for c in (0, 1)])
    A = ewa_update(pop.A, orders.market, scores, learning.r, learning.alpha)
    return Population(pop.cls, A, pbar), RoundStats(pbar, pis, matched)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    cls: int
    t: float


def histogram(pop: Population, c: int, bins: int = 100, range_=None, t: float = math.nan) -> Histogram:
    """Histogram of ``A_1 - A_2`` over class ``c``; the default range pads the data span by 5%."""
    if bins < 2:
        raise ValueError("bins must be at least 2")
    d = pop.delta[pop.cls == c - 1]
    if range_ is None:
        lo, hi = float(d.min()), float(d.max())
        pad = 0.05 * (hi - lo) if hi > lo else 0.5
        range_ = (lo - pad, hi + pad)
    counts, edges = np.histogram(d, bins=bins, range=range_)
    return Histogram(edges, counts, c, t)


@dataclass(frozen=True)
class SimTrace:
    t: np.ndarray
    pbar: np.ndarray     # (n, 2)
    pi: np.ndarray       # (n, 2)
    matched: np.ndarray  # (n, 2)
    strategy: np.ndarray  # (n, 2) class-mean probability of choosing market 1 after the update
    snapshots: tuple[Histogram, ...]
    final: Population
    config: SimConfig


def simulate(config: SimConfig, hist_bins: int = 100, hist_range=None, progress=None) -> SimTrace:
    """Run ``config.n_rounds`` rounds and record aggregates every ``record_every`` rounds.

    ``pbar`` is the realized fraction of each class in market 1; ``strategy`` is the
    class mean of the agents' choice probabilities, free of per-round sampling noise.

    Histograms of both classes are taken at the round closest to each snapshot time.
    """
    params, learning = config.params, config.learning
    pop = Population.uniform(config.n_agents, config.initial_attractions)
    snap_rounds = {int(round(t / learning.r)): t for t in config.snapshot_times}
    ts, pbars, pis, matched, strat, snaps = [], [], [], [], [], []

    def snap(rnd):
        if rnd in snap_rounds:
            for c in (1, 2):
                snaps.append(histogram(pop, c, hist_bins, hist_range, snap_rounds[rnd]))

    snap(0)
    for n in range(config.n_rounds):
        pop, st = run_round(pop, params, learning, config.seed, n)
        if (n + 1) % config.record_every == 0:
            ts.append(learning.r * (n + 1))
            pbars.append(st.pbar)
            pis.append(st.pi)
            matched.append(st.matched)
            p1 = expit(learning.beta * pop.delta)
            strat.append([p1[pop.cls == c].mean() for c in (0, 1)])
        snap(n + 1)
        if progress is not None:
            progress(n + 1)
    return SimTrace(np.array(ts), np.array(pbars).reshape(-1, 2), np.array(pis).reshape(-1, 2),
                    np.array(matched).reshape(-1, 2), np.array(strat).reshape(-1, 2), tuple(snaps), pop, config)


# --- derived measurements --------------------------------------------------------

class ExitTime(NamedTuple):
    n_agents: int
    seed: int
    time: float
    censored: bool


def first_exit_time(t: np.ndarray, x: np.ndarray, center: float, band: float) -> tuple[float, bool]:
    """Time at which ``x`` first leaves ``[center - band, center + band]`` after having entered it.

    A trace that never enters the band exits immediately (time ``t[0]``); one that
    never leaves is censored at ``t[-1]``.
    """
    inside = np.abs(x - center) <= band
    if not inside.any():
        return float(t[0]), False
    k0 = int(np.argmax(inside))
    out = np.nonzero(~inside[k0:])[0]
    if out.size == 0:
        return float(t[-1]), True
    return float(t[k0 + out[0]]), False


def escape_time_scan(config: SimConfig, n_agents_list: Sequence[int], center: float, band: float,
                     seeds: Sequence[int] = (0,), smooth_rounds: int = 1) -> list[ExitTime]:
    """First-exit times of the class-1 aggregate from a band, per population size and seed.

    ``smooth_rounds`` applies a trailing moving average to the realized aggregate
    before testing the band, to suppress single-round binomial noise.
    """
    out = []
    for n in n_agents_list:
        for s in seeds:
            cfg = SimConfig(n_agents=int(n), params=config.params, learning=config.learning,
                            n_rounds=config.n_rounds, seed=int(s), initial_attractions=config.initial_attractions)
            tr = simulate(cfg)
            x = tr.pbar[:, 0]
            if smooth_rounds > 1:
                k = np.ones(smooth_rounds) / smooth_rounds
                x = np.convolve(x, k, mode="full")[:len(x)]
                x[:smooth_rounds - 1] = np.nan
            t_exit, cens = first_exit_time(tr.t, np.nan_to_num(x, nan=np.inf), center, band)
            out.append(ExitTime(int(n), int(s), t_exit, cens))
    return out


class JumpMoments(NamedTuple):
    mean: np.ndarray        # estimated drift, (2,)
    second: np.ndarray      # estimated raw second moment, (2, 2)
    mean_se: np.ndarray
    second_se: np.ndarray
    n: int


def frozen_market_jump_moments(A, c: int, aggr: Aggregates, params: GameParams, learning: LearningParams,
                               n_samples: int, seed: int = 0, n_background: int = 10_000_000,
                               chunk: int = 1_000_000) -> JumpMoments:
    """Monte-Carlo first and second moments of ``(A' - A) / r`` for one probe agent.

    The markets are populated by a large background sample of orders drawn at the
    given aggregates; their realized valid bid and ask counts set each market's
    matching probabilities, and the trading price is the ensemble price.  Probe
    orders are then cleared against these frozen markets and updated by the EWA rule.
    """
    A = np.asarray(A, float)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xFACE])))
    mc = market_constants(params)
    pi = mc.pi
    # background: valid counts per market and side
    valid_b = np.zeros(2)
    valid_a = np.zeros(2)
    n_left = n_background
    half = np.array([0.5, 0.5])
    pbars = np.array(aggr, float)
    pbs = np.array(params.pbs)
    while n_left > 0:
        m = min(chunk, n_left)
        n_left -= m
        cls_ = rng.random(m) >= half[0]
        go1 = rng.random(m) < pbars[cls_.astype(int)]
        buy = rng.random(m) < pbs[cls_.astype(int)]
        z = rng.standard_normal(m)
        for k, mask in ((0, go1), (1, ~go1)):
            p = pi[k]
            valid_b[k] += np.sum(mask & buy & (params.mu_b + params.sigma_b * z > p))
            valid_a[k] += np.sum(mask & ~buy & (params.mu_a + params.sigma_a * z < p))
    with np.errstate(divide="ignore", invalid="ignore"):
        match_bid = np.where(valid_b > 0, np.minimum(valid_a / valid_b, 1.0), 1.0)
        match_ask = np.where(valid_a > 0, np.minimum(valid_b / valid_a, 1.0), 1.0)

    s1 = np.zeros(2)
    s2 = np.zeros((2, 2))
    q1 = np.zeros(2)
    q2 = np.zeros((2, 2))
    p_choice = float(expit(learning.beta * (A[0] - A[1])))
    n_left = n_samples
    while n_left > 0:
        m = min(chunk, n_left)
        n_left -= m
        market = (rng.random(m) >= p_choice).astype(int)
        buy = rng.random(m) < pbs[c - 1]
        z = rng.standard_normal(m)
        price = np.where(buy, params.mu_b + params.sigma_b * z, params.mu_a + params.sigma_a * z)
        p = pi[market]
        valid = np.where(buy, price > p, price < p)
        mprob = np.where(buy, match_bid[market], match_ask[market])
        matched = valid & (rng.random(m) < mprob)
        score = np.where(matched, np.abs(price - p), 0.0)
        new = ewa_update(np.tile(A, (m, 1)), market, score, learning.r, learning.alpha)
        j = (new - A) / learning.r
        jj = j[:, :, None] * j[:, None, :]
        s1 += j.sum(0)
        q1 += (j ** 2).sum(0)
        s2 += jj.sum(0)
        q2 += (jj ** 2).sum(0)
    n = n_samples
    mean = s1 / n
    second = s2 / n
    mean_se = np.sqrt(np.maximum(q1 / n - mean ** 2, 0.0) / n)
    second_se = np.sqrt(np.maximum(q2 / n - second ** 2, 0.0) / n)
    return JumpMoments(mean, second, mean_se, second_se, n)


# --- bimodality -------------------------------------------------------------------

class ModalityResult(NamedTuple):
    bimodal: bool
    bic_one: float
    bic_two: float
    separation: float
    weights: tuple[float, float]


def two_component_test(x: np.ndarray, min_weight: float = 0.05, min_separation: float = 2.0,
                       n_iter: int = 500, tol: float = 1e-10) -> ModalityResult:
    """Bimodality by a one- vs two-component Gaussian mixture comparison.

    The sample counts as bimodal if the two-component fit has the lower BIC, its
    smaller weight is at least ``min_weight`` and its means are at least
    ``min_separation`` pooled standard deviations apart (Ashman's D).  The mixture
    is fitted by EM from a split at the median.
    """
    x = np.asarray(x, float)
    n = len(x)
    mu0, sd0 = float(x.mean()), float(x.std())
    if sd0 == 0.0:
        return ModalityResult(False, -math.inf, math.inf, 0.0, (1.0, 0.0))
    ll1 = float(np.sum(-0.5 * ((x - mu0) / sd0) ** 2 - math.log(sd0) - 0.5 * math.log(2 * math.pi)))
    bic1 = -2 * ll1 + 2 * math.log(n)

    med = np.median(x)
    lo, hi = x[x <= med], x[x > med]
    if len(hi) == 0:
        hi = lo
    w = np.array([0.5, 0.5])
    mu = np.array([lo.mean(), hi.mean()])
    sd = np.array([max(lo.std(), 1e-6 * sd0), max(hi.std(), 1e-6 * sd0)])
    ll_old = -math.inf
    for _ in range(n_iter):
        logp = (-0.5 * ((x[:, None] - mu) / sd) ** 2 - np.log(sd) - 0.5 * math.log(2 * math.pi) + np.log(w))
        mx = logp.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(logp - mx).sum(axis=1))
        ll = float(lse.sum())
        resp = np.exp(logp - lse[:, None])
        nk = resp.sum(0)
        w = nk / n
        mu = (resp * x[:, None]).sum(0) / nk
        sd = np.sqrt(np.maximum((resp * (x[:, None] - mu) ** 2).sum(0) / nk, (1e-6 * sd0) ** 2))
        if ll - ll_old < tol * abs(ll):
            break
        ll_old = ll
    bic2 = -2 * ll + 5 * math.log(n)
    d = abs(mu[1] - mu[0]) / math.sqrt(0.5 * (sd[0] ** 2 + sd[1] ** 2))
    bimodal = bool(bic2 < bic1 and w.min() >= min_weight and d >= min_separation)
    return ModalityResult(bimodal, bic1, bic2, float(d), (float(w[0]), float(w[1])))
