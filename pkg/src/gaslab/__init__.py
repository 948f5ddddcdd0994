"""gaslab: bidding-war simulation, equilibrium analysis, and chain analytics."""

__version__ = "0.1.0"

from .core import (
    Bid,
    BidViolation,
    ConfigError,
    ConstantLoss,
    Exponential,
    Fixed,
    FractionLoss,
    GameParams,
    loss,
    min_next_bid,
    sample_duration,
    validate_bid,
)
from .engine import (
    EstimateReport,
    ExecutionOutcome,
    StrategyFault,
    estimate_advantage,
    estimate_payoff,
    execute,
    is_null_profitable,
    winner_bid,
)
from .equilibrium import (
    EquilibriumParams,
    NashReport,
    check_nash,
    expected_cooperate,
    expected_deviate,
    i_max,
    optimal_bid_schedule,
    p_interval,
    p_time,
    response_delay,
    sealed_bid_equilibrium_payoff,
    win_probability,
)
from .strategies import (
    BlindRaising,
    CooperativeSchedule,
    GrimTrigger,
    NullStrategy,
    ReactiveCounterbidding,
    SealedBid,
    build_strategy,
)

__all__ = [name for name in dir() if not name.startswith("_")]
