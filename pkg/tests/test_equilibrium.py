"""Closed-form ladder analytics: frozen numeric oracles, structural
properties, and Monte Carlo agreement with the live engine."""

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaslab.core import (
    ConfigError,
    ConstantLoss,
    Exponential,
    GameParams,
    UNITS_PER_DOLLAR,
    money,
)
from gaslab.engine import estimate_payoff
from gaslab.equilibrium import (
    EquilibriumParams,
    HypothesisViolated,
    check_nash,
    cooperative_schedule,
    expected_cooperate,
    expected_deviate,
    i_max,
    interval_payoffs,
    optimal_bid_schedule,
    p_interval,
    p_time,
    response_delay,
    sealed_bid_equilibrium_payoff,
    win_probability,
)
from gaslab.strategies import CooperativeSchedule, GrimTrigger, SealedBid

LAM = 1 / 15
TOL = 1e-9


def ladder(n=None, c=0.01):
    m = i_max(0.13, 0.125, c) if n is None else n
    V = [i * 0.4 for i in range(m + 1)]
    W = [w / UNITS_PER_DOLLAR for w in optimal_bid_schedule(130_000_000, Fraction(1, 8), m)]
    return V, W


# ---------------------------------------------------------------------------
# probabilities


def test_p_time_basics():
    assert p_time(LAM, 0.0) == 0.0
    assert p_time(LAM, 15.0) == pytest.approx(1.0 - 1.0 / math.e, abs=1e-12)
    assert round(p_time(LAM, 15.0), 6) == 0.632121


@given(st.floats(0.01, 2.0), st.floats(0.0, 10.0), st.floats(0.01, 5.0))
def test_p_time_is_increasing(lam, t, dt):
    # Bounds keep lam*t small enough that the increment stays above one ulp.
    assert p_time(lam, t + dt) > p_time(lam, t)
    assert 0.0 <= p_time(lam, t) < 1.0


def test_p_interval_base_case_and_frozen_value():
    V, _ = ladder()
    for j in (0, 5, 11):
        assert p_interval(V, LAM, j, j) == pytest.approx(
            1.0 - math.exp(-LAM * 0.4), rel=1e-12
        )
    assert p_interval(V, LAM, 3, 3) == pytest.approx(0.026314250646854997, rel=1e-12)


def test_p_interval_memorylessness():
    V, _ = ladder()
    for j, i in ((0, 4), (2, 9), (5, 16)):
        survive = math.exp(-LAM * (V[i] - V[j]))
        assert p_interval(V, LAM, i, j) == pytest.approx(
            survive * p_interval(V, LAM, i, i), rel=1e-12
        )


def test_p_interval_telescopes_to_one():
    V, _ = ladder()
    m = len(V) - 1
    for j in (0, 7):
        mass = sum(p_interval(V, LAM, i, j) for i in range(j, m))
        mass += math.exp(-LAM * (V[m] - V[j]))  # unbounded last interval
        assert mass == pytest.approx(1.0, abs=1e-12)


def test_p_interval_rejects_bad_indices():
    V, _ = ladder()
    with pytest.raises(ConfigError):
        p_interval(V, LAM, 2, 3)  # j > i
    with pytest.raises(ConfigError):
        p_interval(V, LAM, len(V) - 1, 0)  # top interval has no right edge


def test_win_probabilities_sum_to_one():
    V, _ = ladder()
    for j in (0, 1, 6, 17):
        both = win_probability(V, LAM, 0, j) + win_probability(V, LAM, 1, j)
        assert both == pytest.approx(1.0, abs=1e-12)


def test_win_probability_limits():
    V, _ = ladder()
    # Near-instant endings: whoever holds the current interval wins.
    assert win_probability(V, 1e4, 0, 0) == pytest.approx(1.0, abs=1e-9)
    assert win_probability(V, 1e4, 1, 1) == pytest.approx(1.0, abs=1e-9)
    # Single bounded interval: the parity holding it gets exactly p_interval.
    V2 = [0.0, 0.4]
    assert win_probability(V2, LAM, 0, 0) == p_interval(V2, LAM, 0, 0)
    assert win_probability(V2, LAM, 1, 0) == math.exp(-LAM * 0.4)


# ---------------------------------------------------------------------------
# ladder construction


def test_i_max_known_values():
    assert i_max(1.0, 0.125, 0.0) == 0
    assert i_max(0.13, 0.125, 0.0) == 17
    assert i_max() == 17  # defaults (c=0.01) land on the same count


def brute_i_max(s, iota, c):
    k = 0
    while s * (1 + iota) ** (k + 1) <= 1 + c:
        k += 1
    return k


def test_i_max_matches_brute_force():
    assert i_max(0.5, 0.125, 0.02) == brute_i_max(0.5, 0.125, 0.02)
    import random

    rng = random.Random(31337)
    for _ in range(500):
        s = rng.uniform(0.01, 1.0)
        iota = rng.uniform(0.01, 0.9)
        c = rng.uniform(0.0, 0.5)
        assert i_max(s, iota, c) == brute_i_max(s, iota, c), (s, iota, c)


def test_i_max_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        i_max(0.0, 0.125, 0.01)
    with pytest.raises(ConfigError):
        i_max(0.13, 0.0, 0.01)
    with pytest.raises(ConfigError):
        i_max(1.2, 0.125, 0.1)  # start already above the cap


def test_optimal_bid_schedule_frozen_prefix():
    assert optimal_bid_schedule(130_000_000, Fraction(1, 8), 3) == (
        130_000_000,
        146_250_000,
        164_531_250,
        185_097_657,
    )
    assert optimal_bid_schedule(130_000_000, Fraction(1, 8), 0) == (130_000_000,)
    with pytest.raises(ConfigError):
        optimal_bid_schedule(130_000_000, Fraction(1, 8), -1)


@given(
    start=st.integers(10**6, 10**9),
    num=st.integers(1, 30),
    den=st.integers(31, 200),
    tick=st.sampled_from([1, 10, 1000]),
    n=st.integers(1, 12),
)
@settings(max_examples=150)
def test_optimal_bid_schedule_steps_are_minimal_legal_raises(start, num, den, tick, n):
    start = -(-start // tick) * tick
    W = optimal_bid_schedule(start, Fraction(num, den), n, tick)
    for prev, cur in zip(W, W[1:]):
        assert cur % tick == 0
        assert cur * den >= prev * (den + num)  # legal raise
        assert (cur - tick) * den < prev * (den + num)  # minimal one


def test_cooperative_schedule_matches_its_pieces():
    params = GameParams(duration=Exponential(LAM), loss=ConstantLoss(money("0.01")))
    times, prices = cooperative_schedule(params, t_interval_s=0.4, c=0.01)
    assert len(times) == len(prices) == 18
    assert times == tuple(i * 400_000 for i in range(18))
    assert prices == optimal_bid_schedule(params.min_start, params.min_raise, 17)
    assert prices[-1] == 962_800_358


# ---------------------------------------------------------------------------
# payoffs


def test_interval_payoffs_cases():
    V, W = ladder()
    p = p_interval(V, LAM, 0, 0)
    eb, enb = interval_payoffs(0, 0, V, W, LAM, 0.01)
    assert eb == pytest.approx(p * (1.0 - 0.13), rel=1e-12)
    assert enb == pytest.approx(-0.01 * p, rel=1e-12)
    # Spec'd magnitude: ~0.0229 for the opening interval.
    assert eb == pytest.approx(0.0228934, abs=1e-6)
    assert interval_payoffs(2, 0, V, W, LAM, 0.0)[1] == 0.0
    assert interval_payoffs(0, 0, V, [1.0] + W[1:], LAM, 0.01)[0] == 0.0


def test_expected_cooperate_is_the_interval_sum():
    V, W = ladder()
    m = len(V) - 1
    for parity in (0, 1):
        for j in (0, 3, 8):
            total = 0.0
            for i in range(j, m):
                eb, enb = interval_payoffs(i, j, V, W, LAM, 0.01)
                total += eb if i % 2 == parity else enb
            tail = math.exp(-LAM * (V[m] - V[j]))
            total += tail * (1.0 - W[m]) if m % 2 == parity else -0.01 * tail
            assert expected_cooperate(parity, j, V, W, LAM, 0.01) == pytest.approx(
                total, rel=1e-12
            )


def test_expected_cooperate_limits():
    V, W = ladder()
    m = len(V) - 1
    # Auction all but certain to end immediately: controller banks 1 - W[j].
    assert expected_cooperate(0, 0, V, W, 1e4, 0.01) == pytest.approx(
        1.0 - W[0], abs=1e-9
    )
    # From the top interval the controller wins outright, the other pays c.
    assert expected_cooperate(m % 2, m, V, W, LAM, 0.01) == pytest.approx(
        1.0 - W[m], rel=1e-12
    )
    assert expected_cooperate(1 - m % 2, m, V, W, LAM, 0.01) == pytest.approx(
        -0.01, rel=1e-12
    )


def test_response_delay():
    assert response_delay(0.1, 0.1) == 0.1
    assert response_delay(3.0, 0.1) == 3.0
    assert response_delay(0.0, 0.1) == 0.1


def test_expected_deviate_frozen_value():
    # delay 3 s, lam 1/15, punished price 0.14625, loss 0.01
    v = expected_deviate(3.0, 0, [0.13, 0.14625], LAM, 0.01)
    assert v == pytest.approx(0.1465713120288932, rel=1e-12)


def test_expected_deviate_edge_cases():
    _, W = ladder()
    assert expected_deviate(0.0, 0, W, LAM, 0.01) == -0.01
    # Punished price already above prize + loss: deviating never pays.
    assert expected_deviate(5.0, 0, [0.9, 1.02], LAM, 0.01) == pytest.approx(
        -0.01, rel=1e-12
    )


def test_expected_deviate_hypothesis_gate():
    _, W = ladder()
    with pytest.raises(HypothesisViolated):
        expected_deviate(3.0, 0, W, LAM, 0.01, interval_gap=2.0)
    # The gate only applies when a gap is supplied.
    assert expected_deviate(3.0, 0, W, LAM, 0.01) < 1.0
    assert expected_deviate(0.1, 0, W, LAM, 0.01, interval_gap=0.4) < 1.0


def test_sealed_bid_equilibrium_payoff_is_half_a_tick():
    assert sealed_bid_equilibrium_payoff(0.01) == 0.005
    assert sealed_bid_equilibrium_payoff(2e-9) == 1e-9


# ---------------------------------------------------------------------------
# Nash check


def test_params_validation():
    p = EquilibriumParams()
    assert (p.lam, p.s, p.iota, p.c) == (1 / 15, 0.13, 0.125, 0.01)
    assert EquilibriumParams.from_dict({}) == p
    round_trip = EquilibriumParams.from_dict(p.to_dict())
    assert round_trip == p
    with pytest.raises(ConfigError, match="unknown"):
        EquilibriumParams.from_dict({"lambda": 0.5})
    with pytest.raises(ConfigError):
        EquilibriumParams.from_dict({"lam": "fast"})
    with pytest.raises(ConfigError):
        EquilibriumParams(lam=0.0)
    with pytest.raises(ConfigError):
        EquilibriumParams(t_interval_s=-1.0)
    with pytest.raises(ConfigError):
        EquilibriumParams(rate_limit_s=0.0)
    with pytest.raises(ConfigError):
        EquilibriumParams(delta0_s=-0.1)


def test_check_nash_default_parameters_hold_up():
    report = check_nash(EquilibriumParams())
    assert report.verdict == "equilibrium"
    assert report.is_equilibrium
    assert report.i_max == 17
    assert len(report.rows) == 18
    for row in report.rows:
        assert not row.deviation_profitable
        assert row.e_deviate_nonbidder <= row.e_cooperate_nonbidder + 1e-12
        assert row.bidder == row.j % 2


def test_check_nash_cooperate_curves_decay_within_each_parity():
    rows = check_nash(EquilibriumParams()).rows
    for parity in (0, 1):
        curve = [r.e_cooperate_nonbidder for r in rows if r.bidder == parity]
        assert all(a >= b - 1e-12 for a, b in zip(curve, curve[1:]))


def test_check_nash_slow_ladder_with_laggy_punishment_breaks():
    report = check_nash(
        EquilibriumParams(t_interval_s=2.0, delta0_s=3.0, delta1_s=3.0)
    )
    assert report.verdict == "broken_at(13)"
    assert not report.is_equilibrium
    assert report.broken_at == 13
    assert report.rows[13].deviation_profitable
    assert not any(r.deviation_profitable for r in report.rows[:13])


def test_check_nash_deterrence_limit():
    # Punishment dwarfs any gain and lands almost instantly.
    report = check_nash(
        EquilibriumParams(c=5.0, delta0_s=0.001, delta1_s=0.001, rate_limit_s=0.001)
    )
    assert report.is_equilibrium


def test_check_nash_uses_the_bidders_latency_for_the_deviator():
    # Asymmetric latencies: only intervals whose bidder is the slow player
    # give the deviator a long unanswered window.
    slow = check_nash(EquilibriumParams(t_interval_s=2.0, delta0_s=3.0, delta1_s=0.1))
    W = [
        w / UNITS_PER_DOLLAR
        for w in optimal_bid_schedule(130_000_000, Fraction(1, 8), slow.i_max + 1)
    ]
    for row in slow.rows:
        delay = 3.0 if row.bidder == 0 else 0.1
        assert row.e_deviate_nonbidder == pytest.approx(
            expected_deviate(delay, row.j, W, 1 / 15, 0.01), rel=1e-12
        )


# ---------------------------------------------------------------------------
# Monte Carlo agreement with the engine


def grim(parity, params, times, prices):
    return GrimTrigger(CooperativeSchedule(times, prices, own_parity=parity), params)


def test_cooperating_pair_matches_the_analytic_payoff():
    params = GameParams(duration=Exponential(LAM), loss=ConstantLoss(money("0.01")))
    times, prices = cooperative_schedule(params, 0.4, 0.01)
    V = [t / 1e6 for t in times]
    W = [p / UNITS_PER_DOLLAR for p in prices]
    analytic = expected_cooperate(1, 0, V, W, LAM, 0.01)
    report = estimate_payoff(
        grim(1, params, times, prices),
        100_000,
        grim(0, params, times, prices),
        100_000,
        params,
        n_runs=10_000,
        seed=424,
    )
    assert abs(report.mean - analytic) < 4 * report.std_error


def test_deviating_now_matches_the_analytic_payoff():
    """An opening-interval deviator (bids the punished price immediately)
    earns what the closed form says it should, against a live grim trigger."""
    params = GameParams(duration=Exponential(LAM), loss=ConstantLoss(money("0.01")))
    times, prices = cooperative_schedule(params, 0.4, 0.01)
    chain = optimal_bid_schedule(params.min_start, params.min_raise, 18)
    analytic = expected_deviate(0.1, 0, [w / UNITS_PER_DOLLAR for w in chain], LAM, 0.01)
    deviator = SealedBid(prices[1] + params.tick, at=1)
    report = estimate_payoff(
        deviator,
        100_000,
        grim(0, params, times, prices),
        100_000,
        params,
        n_runs=20_000,
        seed=777,
    )
    assert abs(report.mean - analytic) < 4 * report.std_error
