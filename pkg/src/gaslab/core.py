"""Core types and rules for the continuous-time gas auction.

Money is integer billionths of the prize currency (1.0 == 10**9 units) and
time is integer microseconds, so every game-side quantity is exact: raises
round *up* to the tick, losses round *down* to the unit, and payoffs conserve
to the last digit.  Floating point only appears in the analytic layer
(:mod:`gaslab.equilibrium`) and in reported statistics.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence, Union

MICROS_PER_SECOND = 10**6
UNITS_PER_DOLLAR = 10**9  # Money resolution: 1e-9 of the prize currency.

# Sentinel wake time for "never": far beyond any representable schedule.
T_NEVER = 2**62

TimePoint = int  # microseconds
Money = int  # units of 1e-9


class ConfigError(ValueError):
    """Raised for invalid parameter values or malformed config input."""


# ---------------------------------------------------------------------------
# unit helpers


def to_micros(seconds: float) -> TimePoint:
    """Convert seconds to integer microseconds (round-half-even)."""
    if seconds == math.inf:
        return T_NEVER
    return round(seconds * MICROS_PER_SECOND)


def to_seconds(t: TimePoint) -> float:
    return t / MICROS_PER_SECOND


def money(value) -> Money:
    """Convert a dollar amount (float/str/int) to integer units.

    Values round half-even at the ninth decimal; "0.13" and 0.13 both map to
    130_000_000 exactly.
    """
    if isinstance(value, int):
        return value * UNITS_PER_DOLLAR
    return round(float(value) * UNITS_PER_DOLLAR)


def money_str(units: Money) -> str:
    """Exact decimal rendering of a Money amount (nine fractional digits)."""
    sign = "-" if units < 0 else ""
    units = abs(units)
    return f"{sign}{units // UNITS_PER_DOLLAR}.{units % UNITS_PER_DOLLAR:09d}"


def money_float(units: Money) -> float:
    return units / UNITS_PER_DOLLAR


# ---------------------------------------------------------------------------
# loss functions


@dataclass(frozen=True)
class ConstantLoss:
    """Loser pays a flat amount regardless of their bid."""

    value: Money


@dataclass(frozen=True)
class FractionLoss:
    """Loser pays a fraction of their final bid, rounded down to the unit."""

    alpha: Fraction


LossSpec = Union[ConstantLoss, FractionLoss]


def loss(price: Money, spec: LossSpec) -> Money:
    """Amount the losing bidder pays given their highest bid `price`."""
    if isinstance(spec, ConstantLoss):
        return spec.value
    return (price * spec.alpha.numerator) // spec.alpha.denominator


# ---------------------------------------------------------------------------
# auction duration


@dataclass(frozen=True)
class Exponential:
    """Memoryless duration: next block arrives at rate `rate_per_s`."""

    rate_per_s: float


@dataclass(frozen=True)
class Fixed:
    duration: TimePoint


DurationMode = Union[Exponential, Fixed]


def sample_duration(mode: DurationMode, rng) -> TimePoint:
    """Draw the auction end time (microseconds).

    Exponential mode consumes exactly one uniform variate from `rng` via
    inversion, so the draw count per execution is fixed and reproducible.
    """
    if isinstance(mode, Fixed):
        return mode.duration
    u = 1.0 - rng.random()  # in (0, 1]; avoids log(0)
    seconds = -math.log(u) / mode.rate_per_s
    return max(1, round(seconds * MICROS_PER_SECOND))


# ---------------------------------------------------------------------------
# game parameters


@dataclass(frozen=True)
class GameParams:
    """Static rules of one auction.

    rate_limit is the minimum spacing between one player's own bids,
    min_raise the fractional increment over the player's previous bid
    (rounded up to the tick), min_start the floor for a first bid.
    """

    duration: DurationMode
    rate_limit: TimePoint = 100_000  # 0.1 s
    tick: Money = 1  # 1e-9
    min_raise: Fraction = Fraction(1, 8)
    min_start: Money = 130_000_000  # 0.13
    loss: LossSpec = ConstantLoss(0)
    payoff: Money = UNITS_PER_DOLLAR

    def __post_init__(self):
        if isinstance(self.duration, Exponential):
            if not (self.duration.rate_per_s > 0):
                raise ConfigError("duration rate must be positive")
        elif isinstance(self.duration, Fixed):
            if self.duration.duration <= 0:
                raise ConfigError("fixed duration must be positive")
        else:
            raise ConfigError(f"unknown duration mode: {self.duration!r}")
        if self.rate_limit <= 0:
            raise ConfigError("rate_limit must be positive")
        if self.tick <= 0:
            raise ConfigError("tick must be positive")
        if self.min_start <= 0:
            raise ConfigError("min_start must be positive")
        if self.tick > self.min_start:
            raise ConfigError("tick cannot exceed min_start")
        if self.min_raise < 0:
            raise ConfigError("min_raise cannot be negative")
        if self.payoff <= 0:
            raise ConfigError("payoff must be positive")
        if isinstance(self.loss, ConstantLoss):
            if self.loss.value < 0:
                raise ConfigError("constant loss cannot be negative")
        elif isinstance(self.loss, FractionLoss):
            if not (0 <= self.loss.alpha < 1):
                raise ConfigError("loss fraction must be in [0, 1)")
        else:
            raise ConfigError(f"unknown loss spec: {self.loss!r}")

    @classmethod
    def default(cls) -> "GameParams":
        return cls(duration=Exponential(rate_per_s=1 / 15))

    # -- JSON round trip ----------------------------------------------------

    @classmethod
    def from_dict(cls, obj: dict) -> "GameParams":
        try:
            if "lambda_per_s" in obj:
                duration: DurationMode = Exponential(float(obj["lambda_per_s"]))
            elif "fixed_duration_s" in obj:
                duration = Fixed(to_micros(float(obj["fixed_duration_s"])))
            else:
                raise ConfigError(
                    "duration needs lambda_per_s or fixed_duration_s"
                )
            loss_obj = obj.get("loss", {"kind": "constant", "value": 0})
            kind = loss_obj["kind"]
            if kind == "constant":
                loss_spec: LossSpec = ConstantLoss(money(loss_obj["value"]))
            elif kind == "fraction":
                loss_spec = FractionLoss(Fraction(str(loss_obj["value"])))
            else:
                raise ConfigError(f"unknown loss kind: {kind!r}")
            return cls(
                duration=duration,
                rate_limit=to_micros(float(obj.get("rate_limit_s", 0.1))),
                tick=money(obj.get("tick", 1e-9)),
                min_raise=Fraction(str(obj.get("min_raise", "0.125"))),
                min_start=money(obj.get("min_start", 0.13)),
                loss=loss_spec,
                payoff=money(obj.get("payoff", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad game params: {exc}") from exc

    def to_dict(self) -> dict:
        if isinstance(self.duration, Exponential):
            dur = {"lambda_per_s": self.duration.rate_per_s}
        else:
            dur = {"fixed_duration_s": to_seconds(self.duration.duration)}
        if isinstance(self.loss, ConstantLoss):
            loss_obj = {"kind": "constant", "value": money_float(self.loss.value)}
        else:
            loss_obj = {"kind": "fraction", "value": float(self.loss.alpha)}
        out = dict(dur)
        out.update(
            rate_limit_s=to_seconds(self.rate_limit),
            tick=money_float(self.tick),
            min_raise=float(self.min_raise),
            min_start=money_float(self.min_start),
            loss=loss_obj,
            payoff=money_float(self.payoff),
        )
        return out


# ---------------------------------------------------------------------------
# bids and bid validity


class Bid(NamedTuple):
    time: TimePoint
    price: Money
    player: int


# A published-bid history, in publication order (times non-decreasing); each
# player's own subsequence strictly raises and respects the rate limit.
BidLog = Sequence[Bid]


class BidViolation(enum.Enum):
    BELOW_START = "below_start"
    BELOW_MIN_RAISE = "below_min_raise"
    RATE_LIMITED = "rate_limited"


def min_next_bid(prev_own_price: Money, params: GameParams) -> Money:
    """Lowest admissible price after own bid at `prev_own_price`.

    prev*(1+min_raise) rounded up to the next tick multiple, computed in
    exact integer arithmetic.
    """
    num = params.min_raise.numerator
    den = params.min_raise.denominator
    scaled = prev_own_price * (den + num)
    step = den * params.tick
    return -(-scaled // step) * params.tick


def validate_bid(
    candidate: Bid,
    own_history: Sequence[Bid],
    params: GameParams,
) -> Optional[BidViolation]:
    """Check a candidate bid against the player's own accepted history.

    Returns None when the bid is admissible, otherwise the violated rule.
    Only the most recent own bid matters: prices must be strictly increasing
    so the last bid dominates all raise floors, and the rate limit is
    measured from the last accepted emission.
    """
    if not own_history:
        if candidate.price < params.min_start:
            return BidViolation.BELOW_START
        return None
    last = own_history[-1]
    floor = min_next_bid(last.price, params)
    # The strict-increase requirement only binds when min_raise == 0.
    if candidate.price < floor or candidate.price <= last.price:
        return BidViolation.BELOW_MIN_RAISE
    if candidate.time - last.time < params.rate_limit:
        return BidViolation.RATE_LIMITED
    return None
