"""Randomized game setups shared by the engine fuzz and acceptance tests.

Everything here is driven by a caller-supplied ``random.Random`` so a single
seed reproduces the entire sampled population.
"""

from fractions import Fraction

from gaslab.core import (
    ConstantLoss,
    Exponential,
    Fixed,
    FractionLoss,
    GameParams,
    money,
    to_micros,
)
from gaslab.equilibrium import cooperative_schedule
from gaslab.strategies import (
    BlindRaising,
    CooperativeSchedule,
    GrimTrigger,
    NullStrategy,
    ReactiveCounterbidding,
    SealedBid,
)

IOTAS = [Fraction(0), Fraction(1, 16), Fraction(1, 8), Fraction(1, 4), Fraction(1, 2)]
TICKS = [1, 10, 1000, 10**6]


def random_params(rng) -> GameParams:
    if rng.random() < 0.5:
        duration = Exponential(rng.uniform(0.3, 2.0))
    else:
        duration = Fixed(rng.randrange(10_000, 2_000_000))
    if rng.random() < 0.5:
        loss = ConstantLoss(money(rng.uniform(0.0, 0.05)))
    else:
        loss = FractionLoss(Fraction(rng.randrange(0, 10), 10))
    tick = rng.choice(TICKS)
    return GameParams(
        duration=duration,
        rate_limit=rng.randrange(10_000, 300_000),
        tick=tick,
        min_raise=rng.choice(IOTAS),
        min_start=max(tick, money(rng.uniform(0.05, 0.3))),
        loss=loss,
    )


def random_strategy(rng, params: GameParams):
    kind = rng.randrange(5)
    if kind == 0:
        return NullStrategy()
    if kind == 1:
        # Price sometimes below the start floor and time sometimes past the
        # end on purpose: dropped bids and unpublished bids are code paths.
        return SealedBid(
            price=money(rng.uniform(0.01, 1.2)),
            at=to_micros(rng.uniform(0.0, 1.5)),
        )
    if kind == 2:
        fraction = max(params.min_raise, rng.choice(IOTAS[1:]))
        return BlindRaising.from_params(
            params,
            raise_fraction=fraction,
            interval=rng.randrange(30_000, 400_000),
        )
    if kind == 3:
        return ReactiveCounterbidding.from_params(params)
    if params.min_raise == 0:  # no geometric ladder to cooperate on
        return NullStrategy()
    times, prices = cooperative_schedule(
        params,
        t_interval_s=rng.uniform(0.2, 0.6),
        c=rng.uniform(0.0, 0.02),
    )
    return GrimTrigger(
        CooperativeSchedule(times, prices, own_parity=rng.randrange(2)), params
    )


def random_setup(rng):
    """One full execute() argument set: strategies, latencies, params."""
    params = random_params(rng)
    return (
        random_strategy(rng, params),
        to_micros(rng.uniform(0.0, 0.5)),
        random_strategy(rng, params),
        to_micros(rng.uniform(0.0, 0.5)),
        params,
    )
