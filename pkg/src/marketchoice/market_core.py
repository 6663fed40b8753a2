"""
Stage-game quantities of the two-market double auction.

Traders send one order (bid or ask) to one of two markets. Order prices are
Gaussian ("zero intelligence"), each market clears at a biased average of
the received bid and ask prices, orders on the wrong side of that price are
rejected and the remaining valid orders are paired at random.  In the
large-population limit every expected payoff is a closed-form function of
the buyer/seller ratios ``f_1, f_2``, which in turn depend only on the two
class aggregates ``pbar_1, pbar_2`` (the average probability of choosing
market 1 in each class).

All functions are pure.  The per-market constants (trading price, validity
probabilities, truncated-Gaussian score moments) do not depend on the
aggregates and are cached per :class:`GameParams`.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import erfcx, ndtr

ASK = "ask"
BID = "bid"
SIDES = (ASK, BID)

_SQRT2 = math.sqrt(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
VALIDITY_FLOOR = 1e-300


class VanishingValidityError(ArithmeticError):
    """Validity probability underflows; conditional score moments are undefined."""


@dataclass(frozen=True)
class GameParams:
    """Full specification of the stage game.

    ``theta_m`` weights the mean ask in the trading price of market ``m``;
    ``pb_c`` is the probability that a trader of class ``c`` buys.
    Only ``mu_b - mu_a`` (in units of the price spread) matters.
    """

    theta_1: float = 0.3
    theta_2: float = 0.7
    mu_b: float = 10.0
    mu_a: float = 8.0
    sigma_b: float = 1.0
    sigma_a: float = 1.0
    pb_1: float = 0.2
    pb_2: float = 0.8

    def __post_init__(self):
        for name in ("theta_1", "theta_2", "pb_1", "pb_2"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        for name in ("sigma_b", "sigma_a"):
            v = getattr(self, name)
            if not v > 0.0:
                raise ValueError(f"{name} must be positive, got {v!r}")
        for name in ("mu_b", "mu_a"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def symmetric(cls, theta_1: float, pb: float, **kwargs) -> "GameParams":
        """Mirror-symmetric markets and classes: theta_2 = 1-theta_1, pb_2 = 1-pb."""
        return cls(theta_1=theta_1, theta_2=1.0 - theta_1, pb_1=pb, pb_2=1.0 - pb, **kwargs)

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        return (abs(self.theta_1 + self.theta_2 - 1.0) <= tol
                and abs(self.pb_1 + self.pb_2 - 1.0) <= tol
                and abs(self.sigma_a - self.sigma_b) <= tol)

    @property
    def thetas(self) -> tuple[float, float]:
        return (self.theta_1, self.theta_2)

    @property
    def pbs(self) -> tuple[float, float]:
        return (self.pb_1, self.pb_2)

    def replace(self, **changes) -> "GameParams":
        d = asdict(self)
        d.update(changes)
        return GameParams(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GameParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown GameParams keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GameParams":
        return cls.from_dict(json.loads(text))


class Aggregates(NamedTuple):
    """Class-average probabilities of choosing market 1."""

    pbar_1: float
    pbar_2: float


class MarketConditions(NamedTuple):
    """Buyer-to-seller ratio per market; ``empty_m`` marks a market with no orders."""

    f_1: float
    f_2: float
    empty_1: bool = False
    empty_2: bool = False

    @property
    def f(self) -> tuple[float, float]:
        return (self.f_1, self.f_2)

    @property
    def empty(self) -> tuple[bool, bool]:
        return (self.empty_1, self.empty_2)


class PayoffTable(NamedTuple):
    """Expected payoff and expected squared payoff per market for one class."""

    P_1: float
    P_2: float
    Q_1: float
    Q_2: float

    @property
    def P(self) -> tuple[float, float]:
        return (self.P_1, self.P_2)

    @property
    def Q(self) -> tuple[float, float]:
        return (self.Q_1, self.Q_2)


def trading_price(theta, mean_bid, mean_ask):
    """Clearing price ``(1 - theta) * mean_bid + theta * mean_ask``."""
    return (1.0 - theta) * mean_bid + theta * mean_ask


def _standardized_margin(side: str, pi, params: GameParams):
    # Distance from the mean order price to the rejection threshold, in units of sigma,
    # signed so that larger means "more likely valid".
    if side == ASK:
        return (pi - params.mu_a) / params.sigma_a, params.sigma_a
    if side == BID:
        return (params.mu_b - pi) / params.sigma_b, params.sigma_b
    raise ValueError(f"side must be 'ask' or 'bid', got {side!r}")


def validity_prob(side: str, pi, params: GameParams):
    """Probability that an order of the given side is on the right side of ``pi``."""
    z, _ = _standardized_margin(side, pi, params)
    return ndtr(z)


def truncated_moments(z, scale=1.0):
    """Validity, mean and mean square of the score ``scale * (z - X)`` given ``X < z``.

    ``X`` is standard normal.  Uses the scaled complementary error function so the
    inverse Mills ratio stays accurate deep in the lower tail.
    """
    z = np.asarray(z, dtype=float)
    v = ndtr(z)
    mills = _SQRT_2_OVER_PI / erfcx(-z / _SQRT2)  # phi(z) / Phi(z)
    m1 = z + mills
    m2 = 1.0 + z * z + z * mills
    return v, scale * m1, scale * scale * m2


def score_moments(side: str, pi, params: GameParams):
    """Mean and mean square of ``|order price - pi|`` conditional on validity."""
    z, scale = _standardized_margin(side, pi, params)
    v, m1, m2 = truncated_moments(z, scale)
    if np.any(v < VALIDITY_FLOOR):
        raise VanishingValidityError(f"validity probability {float(np.min(v)):.3g} for {side} orders")
    if np.ndim(m1) == 0:
        return float(m1), float(m2)
    return m1, m2


def matching_prob(side: str, f, v_ask, v_bid):
    """Probability that a valid order finds a counterpart under uniform random pairing.

    ``f`` is the buyer/seller ratio of the market.  A bid in a market with no
    buyers (``f == 0``) faces only sellers and is matched with certainty.
    """
    f = np.asarray(f, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if side == ASK:
            out = np.minimum(f * v_bid / v_ask, 1.0)
        elif side == BID:
            out = np.where(f > 0.0, np.minimum(v_ask / (f * v_bid), 1.0), 1.0)
        else:
            raise ValueError(f"side must be 'ask' or 'bid', got {side!r}")
    return float(out) if out.ndim == 0 else out


class MarketConstants(NamedTuple):
    """Aggregate-independent per-market quantities, arrays indexed by market 0/1."""

    pi: np.ndarray
    v_ask: np.ndarray
    v_bid: np.ndarray
    s_ask: np.ndarray
    s_bid: np.ndarray
    s2_ask: np.ndarray
    s2_bid: np.ndarray


@lru_cache(maxsize=4096)
def market_constants(params: GameParams) -> MarketConstants:
    theta = np.array(params.thetas)
    pi = trading_price(theta, params.mu_b, params.mu_a)
    s_a, s2_a = score_moments(ASK, pi, params)
    s_b, s2_b = score_moments(BID, pi, params)
    out = MarketConstants(
        pi=pi,
        v_ask=validity_prob(ASK, pi, params),
        v_bid=validity_prob(BID, pi, params),
        s_ask=np.asarray(s_a), s_bid=np.asarray(s_b),
        s2_ask=np.asarray(s2_a), s2_bid=np.asarray(s2_b),
    )
    for arr in out:
        arr.setflags(write=False)
    return out


def order_payoff(side: str, m: int, f_m, params: GameParams, empty: bool = False):
    """Expected payoff and squared payoff ``(P, Q)`` of one order at market ``m`` (1 or 2)."""
    if empty:
        return 0.0, 0.0
    k = _market_index(m)
    mc = market_constants(params)
    va, vb = mc.v_ask[k], mc.v_bid[k]
    match = matching_prob(side, f_m, va, vb)
    if side == ASK:
        return float(va * match * mc.s_ask[k]), float(va * match * mc.s2_ask[k])
    return float(vb * match * mc.s_bid[k]), float(vb * match * mc.s2_bid[k])


def _market_index(m: int) -> int:
    if m not in (1, 2):
        raise ValueError(f"market index must be 1 or 2, got {m!r}")
    return m - 1


def _class_index(c: int) -> int:
    if c not in (1, 2):
        raise ValueError(f"class index must be 1 or 2, got {c!r}")
    return c - 1


def class_payoffs(c: int, conditions: MarketConditions, params: GameParams) -> PayoffTable:
    """Payoffs of a class-``c`` trader at each market, averaged over buying and selling."""
    pb = params.pbs[_class_index(c)]
    P, Q = [], []
    for m in (1, 2):
        empty = conditions.empty[m - 1]
        pbm, qbm = order_payoff(BID, m, conditions.f[m - 1], params, empty)
        pam, qam = order_payoff(ASK, m, conditions.f[m - 1], params, empty)
        P.append(pb * pbm + (1.0 - pb) * pam)
        Q.append(pb * qbm + (1.0 - pb) * qam)
    return PayoffTable(P[0], P[1], Q[0], Q[1])


def mixed_payoff(p, table: PayoffTable):
    """Payoff of choosing market 1 with probability ``p``."""
    return p * table.P_1 + (1.0 - p) * table.P_2


def _order_counts(pbar_1, pbar_2, params: GameParams):
    pb1, pb2 = params.pbs
    buyers_1 = pb1 * pbar_1 + pb2 * pbar_2
    sellers_1 = (1 - pb1) * pbar_1 + (1 - pb2) * pbar_2
    buyers_2 = pb1 * (1 - pbar_1) + pb2 * (1 - pbar_2)
    sellers_2 = (1 - pb1) * (1 - pbar_1) + (1 - pb2) * (1 - pbar_2)
    return buyers_1, sellers_1, buyers_2, sellers_2


def _ratio(num: float, den: float) -> tuple[float, bool]:
    if num == 0.0 and den == 0.0:
        return float("nan"), True
    if den == 0.0:
        return math.inf, False
    return num / den, False


def buyer_seller_ratios(aggr: Aggregates, params: GameParams) -> MarketConditions:
    """Buyer/seller ratio at each market implied by the class aggregates."""
    b1, s1, b2, s2 = _order_counts(float(aggr[0]), float(aggr[1]), params)
    f1, e1 = _ratio(b1, s1)
    f2, e2 = _ratio(b2, s2)
    return MarketConditions(f1, f2, e1, e2)


def payoff_tables(aggr: Aggregates, params: GameParams) -> tuple[PayoffTable, PayoffTable]:
    """Payoff tables of class 1 and class 2 at the given aggregates."""
    cond = buyer_seller_ratios(aggr, params)
    return class_payoffs(1, cond, params), class_payoffs(2, cond, params)


def payoff_grid(pbar_1, pbar_2, params: GameParams):
    """Vectorized class payoffs over arrays of aggregates.

    Returns ``(P, Q)`` with shape ``(2, 2) + shape`` indexed as ``[class, market]``.
    Empty markets contribute zero.
    """
    x, y = np.broadcast_arrays(np.asarray(pbar_1, float), np.asarray(pbar_2, float))
    mc = market_constants(params)
    counts = _order_counts(x, y, params)
    P = np.zeros((2, 2) + x.shape)
    Q = np.zeros((2, 2) + x.shape)
    for k in range(2):
        buyers, sellers = counts[2 * k], counts[2 * k + 1]
        empty = (buyers <= 0.0) & (sellers <= 0.0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            # valid-buy to valid-sell ratio; inf when there are no sellers
            q = np.where(sellers > 0, buyers * mc.v_bid[k] / np.where(sellers > 0, sellers, 1.0) / mc.v_ask[k], np.inf)
            m_ask = np.minimum(q, 1.0)
            m_bid = np.where(q > 0, np.minimum(1.0 / q, 1.0), 1.0)
        pa = np.where(empty, 0.0, mc.v_ask[k] * m_ask * mc.s_ask[k])
        pbid = np.where(empty, 0.0, mc.v_bid[k] * m_bid * mc.s_bid[k])
        qa = np.where(empty, 0.0, mc.v_ask[k] * m_ask * mc.s2_ask[k])
        qbid = np.where(empty, 0.0, mc.v_bid[k] * m_bid * mc.s2_bid[k])
        for c, pb in enumerate(params.pbs):
            P[c, k] = pb * pbid + (1 - pb) * pa
            Q[c, k] = pb * qbid + (1 - pb) * qa
    return P, Q


def _class_payoff_scalar(k: int, buyers: float, sellers: float, pb: float, mc: MarketConstants) -> float:
    # scalar twin of the per-market branch of payoff_grid
    if buyers <= 0.0 and sellers <= 0.0:
        return 0.0
    # plain floats: 1 / q overflows quietly to inf, which saturates correctly
    buyers, sellers = float(buyers), float(sellers)
    q = buyers * float(mc.v_bid[k]) / sellers / float(mc.v_ask[k]) if sellers > 0 else math.inf
    m_ask = min(q, 1.0)
    m_bid = min(1.0 / q, 1.0) if q > 0 else 1.0
    return pb * (mc.v_bid[k] * m_bid * mc.s_bid[k]) + (1 - pb) * (mc.v_ask[k] * m_ask * mc.s_ask[k])


def payoff_gap(c: int, pbar_1, pbar_2, params: GameParams):
    """Vectorized ``P_1 - P_2`` for class ``c`` (1 or 2)."""
    k = _class_index(c)
    if np.ndim(pbar_1) == 0 and np.ndim(pbar_2) == 0:
        mc = market_constants(params)
        b1, s1, b2, s2 = _order_counts(float(pbar_1), float(pbar_2), params)
        pb = params.pbs[k]
        return _class_payoff_scalar(0, b1, s1, pb, mc) - _class_payoff_scalar(1, b2, s2, pb, mc)
    x, y = np.broadcast_arrays(np.asarray(pbar_1, float), np.asarray(pbar_2, float))
    mc = market_constants(params)
    counts = _order_counts(x, y, params)
    pb = params.pbs[k]
    out = []
    for m in range(2):
        buyers, sellers = counts[2 * m], counts[2 * m + 1]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            q = np.where(sellers > 0, buyers * mc.v_bid[m] / np.where(sellers > 0, sellers, 1.0) / mc.v_ask[m], np.inf)
            m_bid = np.where(q > 0, np.minimum(1.0 / q, 1.0), 1.0)
        p = pb * (mc.v_bid[m] * m_bid * mc.s_bid[m]) + (1 - pb) * (mc.v_ask[m] * np.minimum(q, 1.0) * mc.s_ask[m])
        out.append(np.where((buyers <= 0.0) & (sellers <= 0.0), 0.0, p))
    return out[0] - out[1]
