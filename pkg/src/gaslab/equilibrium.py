"""Closed-form analysis of the alternating cooperative bidding ladder.

Everything here is float arithmetic (documented tolerance 1e-9); exact money
stays in :mod:`gaslab.core`.  The model: the auction ends at an exponential
time with rate ``lam``; two players alternate raising along a geometric
ladder W at times V; a losing player pays ``c``.  The ladder is profitable
to follow when, at every interval, continuing to cooperate beats jumping the
queue with an immediate overbid that the opponent can only answer after a
response delay.

Interval i spans [V[i], V[i+1]) with the ladder's top bid at W[i]; the final
interval is unbounded, so whoever placed the last ladder bid keeps the top
spot forever if the auction survives that long.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Tuple

from .core import (
    ConfigError,
    GameParams,
    Money,
    TimePoint,
    UNITS_PER_DOLLAR,
    money,
    to_micros,
)


class HypothesisViolated(ValueError):
    """The deviation formula was asked for outside its stated hypothesis."""


def p_time(lam: float, t: float) -> float:
    """Probability the auction has ended by time t."""
    return 1.0 - math.exp(-lam * t)


def i_max(s: float = 0.13, iota: float = 0.125, c: float = 0.01) -> int:
    """Largest i with s*(1+iota)**i <= 1+c: the last raise worth making.

    Closed form floor(log((1+c)/s) / log(1+iota)), nudged to the exact
    boundary so float log error cannot shift the answer.
    """
    if s <= 0 or iota <= 0 or 1 + c < s:
        raise ConfigError("need 0 < s <= 1+c and iota > 0")
    k = max(0, math.floor(math.log((1 + c) / s) / math.log1p(iota)))
    while s * (1 + iota) ** (k + 1) <= 1 + c:
        k += 1
    while k > 0 and s * (1 + iota) ** k > 1 + c:
        k -= 1
    return k


def optimal_bid_schedule(
    start: Money, min_raise: Fraction, n: int, tick: Money = 1
) -> Tuple[Money, ...]:
    """Ladder prices W[0..n]: each the minimum legal raise over the last.

    Compounding from the previous rounded price (instead of rounding
    start*(1+iota)**i directly) keeps every step valid under the raise rule;
    the two differ by a few ticks once rounding has kicked in.
    """
    if n < 0:
        raise ConfigError("n must be non-negative")
    num = min_raise.numerator
    den = min_raise.denominator
    step = den * tick
    out = [start]
    for _ in range(n):
        out.append(-(-out[-1] * (den + num) // step) * tick)
    return tuple(out)


def cooperative_schedule(
    params: GameParams, t_interval_s: float = 0.4, c: float = 0.01
) -> Tuple[Tuple[TimePoint, ...], Tuple[Money, ...]]:
    """Times and prices of the full ladder under the given game rules."""
    m = i_max(
        params.min_start / UNITS_PER_DOLLAR, float(params.min_raise), c
    )
    times = tuple(to_micros(i * t_interval_s) for i in range(m + 1))
    prices = optimal_bid_schedule(params.min_start, params.min_raise, m, params.tick)
    return times, prices


def p_interval(V: Sequence[float], lam: float, i: int, j: int) -> float:
    """P(auction ends in interval i | it survived to V[j]), for i below the top.

    Memorylessness: survive from V[j] to V[i], then fail within the interval.
    """
    if not 0 <= j <= i < len(V) - 1:
        raise ConfigError(f"need j <= i < {len(V) - 1}, got i={i} j={j}")
    return math.exp(-lam * (V[i] - V[j])) * (1.0 - math.exp(-lam * (V[i + 1] - V[i])))


def win_probability(
    V: Sequence[float], lam: float, player_parity: int, j: int
) -> float:
    """P(the player bidding on intervals of `player_parity` wins | reached V[j]).

    The final interval is unbounded, so its mass is the survival probability
    to V[-1]; summed over both parities the result is exactly 1.
    """
    m = len(V) - 1
    total = 0.0
    for i in range(j, m):
        if i % 2 == player_parity:
            total += p_interval(V, lam, i, j)
    if m % 2 == player_parity:
        total += math.exp(-lam * (V[m] - V[j]))
    return total


def interval_payoffs(
    i: int, j: int, V: Sequence[float], W: Sequence[float], lam: float, c: float
) -> Tuple[float, float]:
    """(bidder, non-bidder) payoff contribution of interval i, reached from j.

    If the auction ends in interval i, the player who bid W[i] nets 1-W[i]
    and the other pays c; weight both by the interval's probability.
    """
    p = p_interval(V, lam, i, j)
    return (p * (1.0 - W[i]), p * (-c))


def expected_cooperate(
    player_parity: int,
    j: int,
    V: Sequence[float],
    W: Sequence[float],
    lam: float,
    c: float,
) -> float:
    """Expected payoff of following the ladder from interval j onward.

    Sums interval contributions for the intervals the player does and does
    not control, plus the unbounded final interval, whose controller banks
    1 - W[-1] whenever the auction survives to the last ladder bid.
    """
    m = len(V) - 1
    total = 0.0
    for i in range(j, m):
        p = p_interval(V, lam, i, j)
        total += p * (1.0 - W[i]) if i % 2 == player_parity else p * (-c)
    tail = math.exp(-lam * (V[m] - V[j]))
    total += tail * (1.0 - W[m]) if m % 2 == player_parity else tail * (-c)
    return total


def response_delay(delta_other: float, rate_limit: float) -> float:
    """How long a deviator's lead lasts before it can be answered."""
    return max(delta_other, rate_limit)


def expected_deviate(
    delay: float,
    i: int,
    W: Sequence[float],
    lam: float,
    c: float,
    interval_gap: Optional[float] = None,
) -> float:
    """Expected payoff of overbidding now, at interval i, instead of waiting.

    For `delay` the deviator holds the top spot; if the auction ends in that
    window they collect the better of winning at the punished price W[i+1]
    and simply losing (-c).  Afterwards the opponent's punishment makes
    losing certain.  The formula assumes the deviation window fits inside
    one ladder interval; pass `interval_gap` to enforce that hypothesis
    (outside it the expression is still well defined and is what the broken-
    parameter diagnostics plot, so it is not enforced by default).
    """
    if interval_gap is not None and delay >= interval_gap:
        raise HypothesisViolated(
            f"delay {delay} does not fit in a ladder interval of {interval_gap}"
        )
    p = p_time(lam, delay)
    return p * max(-c, 1.0 - W[i + 1]) + (1.0 - p) * (-c)


def sealed_bid_equilibrium_payoff(tick: float) -> float:
    """Per-player value of the one-shot sealed variant: half a tick."""
    return tick / 2.0


# ---------------------------------------------------------------------------
# Nash check over every interval


@dataclass(frozen=True)
class EquilibriumParams:
    lam: float = 1 / 15
    s: float = 0.13
    iota: float = 0.125
    c: float = 0.01
    t_interval_s: float = 0.4
    delta0_s: float = 0.1
    delta1_s: float = 0.1
    rate_limit_s: float = 0.1
    tick: float = 1e-9

    def __post_init__(self):
        if self.lam <= 0 or self.t_interval_s <= 0:
            raise ConfigError("lam and t_interval_s must be positive")
        if self.rate_limit_s <= 0 or min(self.delta0_s, self.delta1_s) < 0:
            raise ConfigError("bad latency/rate limit")

    @classmethod
    def from_dict(cls, obj: dict) -> "EquilibriumParams":
        try:
            known = {f for f in cls.__dataclass_fields__}
            extra = set(obj) - known
            if extra:
                raise ConfigError(f"unknown equilibrium fields: {sorted(extra)}")
            return cls(**{k: float(v) for k, v in obj.items()})
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad equilibrium params: {exc}") from exc

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


@dataclass(frozen=True)
class NashRow:
    j: int
    interval_start_s: float
    bidder: int  # player index holding interval j
    e_cooperate_bidder: float
    e_cooperate_nonbidder: float
    e_deviate_nonbidder: float
    deviation_profitable: bool


@dataclass(frozen=True)
class NashReport:
    rows: Tuple[NashRow, ...]
    i_max: int
    broken_at: Optional[int]

    @property
    def verdict(self) -> str:
        return "equilibrium" if self.broken_at is None else f"broken_at({self.broken_at})"

    @property
    def is_equilibrium(self) -> bool:
        return self.broken_at is None


# Strictly-better margin for calling a deviation profitable: well under the
# module's 1e-9 tolerance, enough to absorb last-ulp float noise in exact
# ties (both sides equal -c at the top interval).
_STRICT = 1e-12


def check_nash(params: EquilibriumParams) -> NashReport:
    """Evaluate cooperate-vs-deviate at the start of every ladder interval.

    The non-bidder of interval j is the potential deviator; their punishment
    arrives after max(bidder's latency, rate limit).  The ladder is a
    subgame-perfect pattern iff no interval makes deviation strictly better.
    """
    m = i_max(params.s, params.iota, params.c)
    V = [i * params.t_interval_s for i in range(m + 1)]
    chain = optimal_bid_schedule(
        money(params.s),
        Fraction(str(params.iota)),
        m + 1,
        max(1, money(params.tick)),
    )
    W = [x / UNITS_PER_DOLLAR for x in chain]  # W[0..m+1]; last for deviation only
    W_sched = W[: m + 1]
    delays = (
        response_delay(params.delta0_s, params.rate_limit_s),
        response_delay(params.delta1_s, params.rate_limit_s),
    )
    rows = []
    broken_at = None
    for j in range(m + 1):
        bidder = j % 2
        e_cb = expected_cooperate(bidder, j, V, W_sched, params.lam, params.c)
        e_cnb = expected_cooperate(1 - bidder, j, V, W_sched, params.lam, params.c)
        e_dev = expected_deviate(delays[bidder], j, W, params.lam, params.c)
        profitable = e_dev > e_cnb + _STRICT
        rows.append(
            NashRow(
                j=j,
                interval_start_s=V[j],
                bidder=bidder,
                e_cooperate_bidder=e_cb,
                e_cooperate_nonbidder=e_cnb,
                e_deviate_nonbidder=e_dev,
                deviation_profitable=profitable,
            )
        )
        if profitable and broken_at is None:
            broken_at = j
    return NashReport(rows=tuple(rows), i_max=m, broken_at=broken_at)
