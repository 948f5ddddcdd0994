"""Bidding strategies as pure state machines.

A strategy is an immutable configuration object with two methods:

    initial_state() -> state
    step(view, state) -> StrategyAction(price, next_wake, state)

The engine invokes ``step`` whenever the player wakes or a new bid is
delivered to it.  ``view`` contains only what the player is allowed to see:
the published log up to ``now`` minus the player's latency.  Returning a
price emits a bid at the current instant (the engine validates it); price
None passes.  ``next_wake`` schedules the next self-invocation and must not
be in the past.

Because state is threaded through explicitly, the same strategy object can
drive any number of concurrent executions.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, NamedTuple, Optional, Protocol, Sequence, Tuple

from .core import (
    Bid,
    ConfigError,
    GameParams,
    LossSpec,
    Money,
    T_NEVER,
    TimePoint,
    loss,
    min_next_bid,
    money,
    to_micros,
)


class StrategyView(NamedTuple):
    """What one player can see when invoked."""

    visible: Tuple[Bid, ...]  # published bids with time <= now - latency
    now: TimePoint
    player: int


class StrategyAction(NamedTuple):
    price: Optional[Money]  # None = pass
    next_wake: TimePoint
    state: Any


class Strategy(Protocol):
    def initial_state(self) -> Any: ...

    def step(self, view: StrategyView, state: Any) -> StrategyAction: ...


def _ceil_tick(value_num: int, value_den: int, tick: Money) -> Money:
    """Round the rational value_num/value_den up to a tick multiple."""
    step = value_den * tick
    return -(-value_num // step) * tick


def _profit_cap(payoff: Money, spec: LossSpec) -> Money:
    """Highest price worth bidding: beyond it, winning pays worse than losing.

    Largest p with payoff - p >= -loss(p).
    """
    cap = payoff + loss(payoff, spec)
    while cap - loss(cap, spec) > payoff:
        cap -= 1
    # loss() is non-decreasing, so anything above `cap` stays unprofitable.
    return cap


# ---------------------------------------------------------------------------


class NullStrategy:
    """Never bids."""

    def initial_state(self):
        return None

    def step(self, view: StrategyView, state) -> StrategyAction:
        return StrategyAction(None, T_NEVER, state)


class SealedBid:
    """Single bid at a fixed price and time, then silence."""

    def __init__(self, price: Money, at: TimePoint = 0):
        self.price = price
        self.at = at

    def initial_state(self):
        return False  # placed?

    def step(self, view: StrategyView, state) -> StrategyAction:
        if state or view.now < self.at:
            return StrategyAction(None, self.at if not state else T_NEVER, state)
        return StrategyAction(self.price, T_NEVER, True)


class BlindRaising:
    """Raise own bid by a fixed fraction on a fixed clock, ignoring the log.

    Each price compounds from the previously emitted one (rounded up to the
    tick), which keeps every bid valid under the minimum-raise rule when the
    raise fraction is at least the game's.  Raising stops once the next price
    would exceed ``max_price`` (default: the point where even a winning bid
    pays worse than losing).
    """

    def __init__(
        self,
        b0: Money,
        raise_fraction: Fraction,
        interval: TimePoint,
        tick: Money,
        max_price: Money,
    ):
        if b0 <= 0 or interval <= 0 or raise_fraction <= 0:
            raise ConfigError("blind raising needs positive b0/interval/fraction")
        self.b0 = b0
        self.raise_fraction = raise_fraction
        self.interval = interval
        self.tick = tick
        self.max_price = max_price

    @classmethod
    def from_params(
        cls,
        params: GameParams,
        b0: Optional[Money] = None,
        raise_fraction: Optional[Fraction] = None,
        interval: Optional[TimePoint] = None,
        max_price: Optional[Money] = None,
    ) -> "BlindRaising":
        return cls(
            b0=params.min_start if b0 is None else b0,
            raise_fraction=params.min_raise if raise_fraction is None else raise_fraction,
            interval=params.rate_limit if interval is None else interval,
            tick=params.tick,
            max_price=_profit_cap(params.payoff, params.loss)
            if max_price is None
            else max_price,
        )

    def initial_state(self):
        # (next raise index, previous emitted price or None)
        return (0, None)

    def step(self, view: StrategyView, state) -> StrategyAction:
        k, prev = state
        if k < 0:  # capped out
            return StrategyAction(None, T_NEVER, state)
        due = k * self.interval
        if view.now < due:  # a delivery between scheduled raises
            return StrategyAction(None, due, state)
        if prev is None:
            price = self.b0
        else:
            num = self.raise_fraction.numerator
            den = self.raise_fraction.denominator
            price = _ceil_tick(prev * (den + num), den, self.tick)
        if price > self.max_price:
            return StrategyAction(None, T_NEVER, (-1, prev))
        return StrategyAction(price, (k + 1) * self.interval, (k + 1, price))


class ReactiveCounterbidding:
    """Open at the minimum start, then top any observed opposing lead.

    On seeing an opposing price above its own, bids the larger of its own
    minimum raise and one tick over the opposing price — unless that exceeds
    the point of indifference (prize + what losing from here would cost), in
    which case it drops out for good.  A counterbid blocked by the rate limit
    is retried (against the then-current view) as soon as the limit allows.
    """

    def __init__(
        self,
        start: Money,
        rate_limit: TimePoint,
        tick: Money,
        min_raise: Fraction,
        loss_spec: LossSpec,
        payoff: Money,
    ):
        self.start = start
        self.rate_limit = rate_limit
        self.tick = tick
        self.min_raise = min_raise
        self.loss_spec = loss_spec
        self.payoff = payoff
        self._raise_params = _RaiseParams(min_raise, tick)

    @classmethod
    def from_params(cls, params: GameParams, start: Optional[Money] = None):
        return cls(
            start=params.min_start if start is None else start,
            rate_limit=params.rate_limit,
            tick=params.tick,
            min_raise=params.min_raise,
            loss_spec=params.loss,
            payoff=params.payoff,
        )

    def initial_state(self):
        # (own top price or None, time of own last emission, still active?)
        return (None, 0, True)

    def step(self, view: StrategyView, state) -> StrategyAction:
        own, own_t, active = state
        if not active:
            return StrategyAction(None, T_NEVER, state)
        if own is None:
            return StrategyAction(self.start, T_NEVER, (self.start, view.now, True))
        opp = None
        for b in reversed(view.visible):
            if b.player != view.player:
                opp = b.price
                break
        if opp is None or opp <= own:
            return StrategyAction(None, T_NEVER, state)
        candidate = max(min_next_bid(own, self._raise_params), opp + self.tick)
        if candidate > self.payoff + loss(own, self.loss_spec):
            return StrategyAction(None, T_NEVER, (own, own_t, False))
        if view.now - own_t >= self.rate_limit:
            return StrategyAction(candidate, T_NEVER, (candidate, view.now, True))
        return StrategyAction(None, own_t + self.rate_limit, state)


class _RaiseParams(NamedTuple):
    """Duck-typed stand-in for GameParams where only raise math is needed."""

    min_raise: Fraction
    tick: Money


@dataclass(frozen=True)
class CooperativeSchedule:
    """Alternating bid ladder: player ``own_parity`` owns the even or odd slots.

    times[i] is when the i-th ladder bid is due and prices[i] what it should
    be.  Adjacent prices must respect the minimum-raise rule and one player's
    consecutive slots must clear the rate limit.
    """

    times: Tuple[TimePoint, ...]
    prices: Tuple[Money, ...]
    own_parity: int

    def __post_init__(self):
        if len(self.times) != len(self.prices) or not self.times:
            raise ConfigError("schedule times/prices must align and be non-empty")
        if self.own_parity not in (0, 1):
            raise ConfigError("own_parity must be 0 or 1")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError("schedule times must strictly increase")

    def validate_against(self, params: GameParams) -> None:
        if self.prices[0] < params.min_start:
            raise ConfigError("schedule opens below the minimum start")
        for prev, cur in zip(self.prices, self.prices[1:]):
            if cur < min_next_bid(prev, params):
                raise ConfigError("schedule price below the minimum raise")
        for i in range(len(self.times) - 2):
            if self.times[i + 2] - self.times[i] < params.rate_limit:
                raise ConfigError("same-player schedule slots violate rate limit")


_COOP, _PUNISH, _DONE = 0, 1, 2


class GrimTrigger:
    """Follow a cooperative ladder; on any off-ladder raise, punish and quit.

    The player bids prices[m] at times[m] for its own slots m.  An opposing
    bid that lands before the player's next slot at a price above the ladder
    entry preceding that slot counts as a deviation (before the first ladder
    entry, anything above the auction's minimum start does).  The punishment
    bid makes the deviator's win unprofitable: prize + loss(deviating price),
    raised to the player's own minimum-raise floor if that is higher, emitted
    as soon as the rate limit allows.  After the ladder is exhausted the
    strategy goes quiet: outbidding its final price already costs more than
    the prize is worth.
    """

    def __init__(self, schedule: CooperativeSchedule, params: GameParams):
        schedule.validate_against(params)
        self.schedule = schedule
        self.params = params

    def initial_state(self):
        # (next own slot, own price, own time, mode, punish target, bids seen)
        m = self.schedule.own_parity
        return (m, None, 0, _COOP if m < len(self.schedule.times) else _DONE, 0, 0)

    def step(self, view: StrategyView, state) -> StrategyAction:
        m, own, own_t, mode, target, seen = state
        if mode == _DONE:
            return StrategyAction(None, T_NEVER, state)
        V = self.schedule.times
        W = self.schedule.prices
        # Scan bids that became visible since the last invocation.
        if seen < len(view.visible):
            threshold = W[m - 1] if m >= 1 else self.params.min_start
            for b in view.visible[seen:]:
                if b.player == view.player:
                    continue
                if mode == _PUNISH:
                    target = max(target, b.price)
                elif b.time < V[m] and b.price > threshold:
                    mode = _PUNISH
                    target = max(target, b.price)
            seen = len(view.visible)
        if mode == _PUNISH:
            if own is not None and view.now - own_t < self.params.rate_limit:
                return StrategyAction(
                    None, own_t + self.params.rate_limit, (m, own, own_t, mode, target, seen)
                )
            price = self.params.payoff + loss(target, self.params.loss)
            if own is not None:
                price = max(price, min_next_bid(own, self.params))
            return StrategyAction(price, T_NEVER, (m, price, view.now, _DONE, target, seen))
        if view.now >= V[m]:
            price = W[m]
            nxt = m + 2
            if nxt < len(V):
                return StrategyAction(price, V[nxt], (nxt, price, view.now, _COOP, target, seen))
            return StrategyAction(price, T_NEVER, (nxt, price, view.now, _DONE, target, seen))
        return StrategyAction(None, V[m], (m, own, own_t, mode, target, seen))


# ---------------------------------------------------------------------------
# JSON construction


def build_strategy(obj: dict, params: GameParams):
    """Construct a strategy from a {"kind": ..., ...} JSON object."""
    try:
        kind = obj["kind"]
        if kind == "null":
            return NullStrategy()
        if kind == "sealed":
            return SealedBid(price=money(obj["price"]), at=to_micros(obj.get("at_s", 0.0)))
        if kind == "blind":
            return BlindRaising.from_params(
                params,
                b0=money(obj["b0"]) if "b0" in obj else None,
                raise_fraction=Fraction(str(obj["raise_fraction"]))
                if "raise_fraction" in obj
                else None,
                interval=to_micros(obj["interval_s"]) if "interval_s" in obj else None,
                max_price=money(obj["max_price"]) if "max_price" in obj else None,
            )
        if kind == "reactive":
            return ReactiveCounterbidding.from_params(
                params, start=money(obj["start"]) if "start" in obj else None
            )
        if kind == "grim":
            if "times_s" in obj:
                times = tuple(to_micros(t) for t in obj["times_s"])
                prices = tuple(money(p) for p in obj["prices"])
            else:
                from .equilibrium import cooperative_schedule

                times, prices = cooperative_schedule(
                    params,
                    t_interval_s=float(obj.get("t_interval_s", 0.4)),
                    c=float(obj.get("c", 0.01)),
                )
            return GrimTrigger(
                CooperativeSchedule(times, prices, own_parity=int(obj["parity"])), params
            )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad strategy spec: {exc}") from exc
    raise ConfigError(f"unknown strategy kind: {obj.get('kind')!r}")
