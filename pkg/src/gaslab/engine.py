"""Continuous-time execution of a two-player bidding war.

The engine advances a virtual clock over discrete event instants.  At each
instant it runs, in rounds until the instant is quiet:

1. deliveries — published bids whose propagation delay to a player has
   elapsed trigger that player's step function (player 0 first);
2. wakes — players whose self-scheduled wake time has arrived step
   (player 0 first);
3. publication — every bid emitted at this instant is appended to the
   published log, in uniformly random order when several are pending.

Emitted bids are checked against the emitter's own accepted history (start
floor, minimum raise, rate limit); invalid ones are dropped and counted,
they never reach the log.  A published bid becomes visible to a player only
once that player's latency has elapsed, so each step call sees a possibly
stale prefix of the log.

The auction ends at a pre-sampled time: bids published strictly before it
count, everything after is void.  The highest published price wins (earliest
bid wins price ties), the winner pays their bid, the loser pays the loss
function of their own highest bid, and the miner collects both.

All run-to-run variation flows from one integer seed: the duration draw and
publication tie-breaks share a single RNG, and batch estimators derive
per-run seeds by hashing (seed, run index), so any run of a batch can be
reproduced in isolation.
"""

from __future__ import annotations

import csv
import hashlib
import math
import random
from dataclasses import dataclass
from heapq import heappush, heappop
from typing import Optional, Tuple

from .core import (
    Bid,
    BidLog,
    BidViolation,
    GameParams,
    Money,
    T_NEVER,
    TimePoint,
    loss,
    money_str,
    sample_duration,
)
from .strategies import NullStrategy, StrategyView

_MAX_ROUNDS_PER_INSTANT = 1000


class StrategyFault(RuntimeError):
    """A strategy asked to wake in the past or livelocked an instant."""


@dataclass(frozen=True)
class ExecutionOutcome:
    winner: Optional[int]
    winning_bid: Optional[Bid]
    losing_bid: Optional[Bid]  # loser's highest bid, if they bid at all
    payoffs: Tuple[Money, Money]
    miner_revenue: Money
    log: BidLog
    end_time: TimePoint
    dropped: Tuple[int, int]  # invalid emissions per player
    events: Optional[Tuple] = None


def winner_bid(log: BidLog) -> Optional[Bid]:
    """Highest-priced bid; the earliest one wins a price tie."""
    best = None
    for b in log:
        if best is None or b.price > best.price:
            best = b
    return best


def execute(
    strategy0,
    delta0: TimePoint,
    strategy1,
    delta1: TimePoint,
    params: GameParams,
    seed: int,
    collect_events: bool = False,
) -> ExecutionOutcome:
    """Run one auction to completion and settle it."""
    rng = random.Random(seed)
    t_end = sample_duration(params.duration, rng)

    strategies = (strategy0, strategy1)
    deltas = (delta0, delta1)
    states = [strategy0.initial_state(), strategy1.initial_state()]
    wakes = [0, 0]
    deliveries: Tuple[list, list] = ([], [])
    published: list = []
    pub_times: list = []
    pending: list = []
    last_bid: list = [None, None]
    dropped = [0, 0]
    events: Optional[list] = [] if collect_events else None

    num = params.min_raise.numerator
    den = params.min_raise.denominator
    tick = params.tick
    raise_step = den * tick

    def invoke(i: int, now: TimePoint, kind: str) -> None:
        cut = now - deltas[i]
        if pub_times and pub_times[-1] > cut:
            # Binary search would be overkill: stale suffixes are short.
            idx = len(pub_times)
            while idx > 0 and pub_times[idx - 1] > cut:
                idx -= 1
            visible = published[:idx]
        else:
            visible = published[:]
        action = strategies[i].step(StrategyView(visible, now, i), states[i])
        states[i] = action.state
        if action.next_wake < now:
            raise StrategyFault(
                f"player {i} scheduled wake {action.next_wake} before now {now}"
            )
        wakes[i] = action.next_wake
        if events is not None:
            events.append((kind, now, i, None, True))
        price = action.price
        if price is None:
            return
        last = last_bid[i]
        if last is None:
            violation = (
                BidViolation.BELOW_START if price < params.min_start else None
            )
        elif price <= last.price or price < -(-last.price * (den + num) // raise_step) * tick:
            violation = BidViolation.BELOW_MIN_RAISE
        elif now - last.time < params.rate_limit:
            violation = BidViolation.RATE_LIMITED
        else:
            violation = None
        if violation is not None:
            dropped[i] += 1
            if events is not None:
                events.append(("emit", now, i, price, False))
            return
        bid = Bid(now, price, i)
        last_bid[i] = bid
        pending.append(bid)
        if events is not None:
            events.append(("emit", now, i, price, True))

    while True:
        t_next = min(
            wakes[0],
            wakes[1],
            deliveries[0][0] if deliveries[0] else T_NEVER,
            deliveries[1][0] if deliveries[1] else T_NEVER,
        )
        if t_next >= t_end:
            break
        now = t_next
        for _round in range(_MAX_ROUNDS_PER_INSTANT):
            for i in (0, 1):
                q = deliveries[i]
                while q and q[0] == now:
                    heappop(q)
                    invoke(i, now, "deliver")
            for i in (0, 1):
                if wakes[i] == now:
                    # Clear first so a strategy passing without rescheduling
                    # does not spin; invoke() restores its chosen wake.
                    wakes[i] = T_NEVER
                    invoke(i, now, "wake")
            if pending:
                while pending:
                    k = rng.randrange(len(pending)) if len(pending) > 1 else 0
                    bid = pending.pop(k)
                    published.append(bid)
                    pub_times.append(now)
                    if events is not None:
                        events.append(("publish", now, bid.player, bid.price, True))
                    other = 1 - bid.player
                    heappush(deliveries[other], now + deltas[other])
            more = wakes[0] == now or wakes[1] == now
            for q in deliveries:
                if q and q[0] == now:
                    more = True
            if not more:
                break
        else:
            raise StrategyFault(f"no progress at instant {now}")

    win = winner_bid(published)
    if win is None:
        outcome_payoffs = (0, 0)
        lose_best = None
        miner = 0
    else:
        loser = 1 - win.player
        lose_best = winner_bid(b for b in published if b.player == loser)
        payoffs = [0, 0]
        payoffs[win.player] = params.payoff - win.price
        miner = win.price
        if lose_best is not None:
            lost = loss(lose_best.price, params.loss)
            payoffs[loser] = -lost
            miner += lost
        outcome_payoffs = (payoffs[0], payoffs[1])
    return ExecutionOutcome(
        winner=None if win is None else win.player,
        winning_bid=win,
        losing_bid=lose_best,
        payoffs=outcome_payoffs,
        miner_revenue=miner,
        log=tuple(published),
        end_time=t_end,
        dropped=(dropped[0], dropped[1]),
        events=tuple(events) if events is not None else None,
    )


# ---------------------------------------------------------------------------
# event log serialization

EVENT_LOG_COLUMNS = ("event_kind", "time_us", "player", "price", "accepted")


def write_event_log(events, fileobj) -> None:
    """Write engine events as CSV (prices as exact decimal strings)."""
    writer = csv.writer(fileobj, lineterminator="\n")
    writer.writerow(EVENT_LOG_COLUMNS)
    for kind, t, player, price, accepted in events:
        writer.writerow(
            (
                kind,
                t,
                player,
                "" if price is None else money_str(price),
                "true" if accepted else "false",
            )
        )


# ---------------------------------------------------------------------------
# Monte Carlo estimators


@dataclass(frozen=True)
class EstimateReport:
    """Sample statistics in prize-currency units (floats, not exact)."""

    mean: float
    std_error: float
    n_runs: int
    ci95: Tuple[float, float]


def derive_run_seed(seed: int, index: int) -> int:
    """Per-run seed: 128-bit blake2b of the (master seed, run index) pair.

    Hash-derived rather than sequential so neighbouring runs share no RNG
    stream structure, and any single run can be reproduced without replaying
    the batch.
    """
    payload = (seed & (2**64 - 1)).to_bytes(8, "big") + index.to_bytes(8, "big")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=16).digest(), "big")


_UNITS = 10**9


def _report(total: int, total_sq: int, n: int) -> EstimateReport:
    mean_u = total / n
    if n > 1:
        var_u = (total_sq - total * total / n) / (n - 1)
        se = math.sqrt(max(var_u, 0.0) / n) / _UNITS
    else:
        se = float("inf")
    mean = mean_u / _UNITS
    return EstimateReport(
        mean=mean,
        std_error=se,
        n_runs=n,
        ci95=(mean - 1.96 * se, mean + 1.96 * se),
    )


def estimate_payoff(
    strategy0,
    delta0: TimePoint,
    strategy1,
    delta1: TimePoint,
    params: GameParams,
    n_runs: int,
    seed: int,
) -> EstimateReport:
    """Mean payoff of player 0 over independent seeded runs."""
    total = 0
    total_sq = 0
    for i in range(n_runs):
        x = execute(
            strategy0, delta0, strategy1, delta1, params, derive_run_seed(seed, i)
        ).payoffs[0]
        total += x
        total_sq += x * x
    return _report(total, total_sq, n_runs)


def estimate_advantage(
    strategy_a,
    delta_a: TimePoint,
    strategy_b,
    delta_b: TimePoint,
    params: GameParams,
    n_runs: int,
    seed: int,
) -> EstimateReport:
    """Paired estimate of how much strategy A out-earns strategy B.

    Each run is played twice with the same per-run seed — A first, then B
    first — and the difference of the two first-position payoffs is
    averaged, which cancels the common duration randomness.
    """
    total = 0
    total_sq = 0
    for i in range(n_runs):
        s = derive_run_seed(seed, i)
        a = execute(strategy_a, delta_a, strategy_b, delta_b, params, s).payoffs[0]
        b = execute(strategy_b, delta_b, strategy_a, delta_a, params, s).payoffs[0]
        x = a - b
        total += x
        total_sq += x * x
    return _report(total, total_sq, n_runs)


def is_null_profitable(
    strategy,
    delta: TimePoint,
    params: GameParams,
    n_runs: int,
    seed: int,
) -> Tuple[bool, EstimateReport]:
    """Does the strategy beat never bidding at the 95% level?

    Runs the strategy against a silent opponent and checks that the lower
    end of the payoff's 95% confidence interval clears zero.
    """
    report = estimate_payoff(strategy, delta, NullStrategy(), 0, params, n_runs, seed)
    return (report.mean - 1.96 * report.std_error > 0, report)
