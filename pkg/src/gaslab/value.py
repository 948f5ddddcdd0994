"""On-chain value accounting for trade bundles and fee-vs-arbitrage corpora.

All amounts are :class:`decimal.Decimal` parsed from strings, never floats:
the numbers of interest (18-decimal token amounts, nine-digit fee sums)
cannot round-trip through binary floating point.  Arithmetic runs under an
explicit 50-digit context so products of full-precision operands stay exact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation, localcontext
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

from .core import ConfigError

_PREC = 50
_GWEI = Decimal("1e-9")
# A quoted rate must reproduce the bought amount to this relative tolerance.
_RATE_RTOL = Decimal("1e-6")


class MissingBase(ValueError):
    """The bundle never touches the base asset, so profit is undefined."""


class EmptyBlock(ValueError):
    """Fee share is undefined: the block has no fees and no arbitrage."""


# ---------------------------------------------------------------------------
# trade bundles


@dataclass(frozen=True)
class TradeLeg:
    exchange: str
    sold_asset: str
    sold_amount: Decimal
    bought_asset: str
    bought_amount: Decimal
    rate: Optional[Decimal] = None  # bought per sold, as quoted by the venue

    def implied_rate(self) -> Optional[Decimal]:
        """The quoted rate if present, else bought/sold (None for zero sold)."""
        if self.rate is not None:
            return self.rate
        if self.sold_amount == 0:
            return None
        with localcontext() as ctx:
            ctx.prec = _PREC
            return self.bought_amount / self.sold_amount


@dataclass(frozen=True)
class TransactionBundle:
    legs: Tuple[TradeLeg, ...]
    gas_used: int
    gas_price_gwei: Decimal


def _dec(value) -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, float):
        # Floats are refused on purpose: "0.1" and float 0.1 differ.
        raise ConfigError(f"amount {value!r} must be a string, not a float")
    try:
        return Decimal(str(value))
    except InvalidOperation as exc:
        raise ConfigError(f"bad decimal amount: {value!r}") from exc


def parse_bundle(source) -> TransactionBundle:
    """Build a TransactionBundle from a JSON string or an already-parsed dict.

    JSON text is parsed with Decimal floats so numeric literals keep every
    digit; in dict form, amounts must be strings or Decimals.
    """
    if isinstance(source, str):
        try:
            obj = json.loads(source, parse_float=Decimal)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad bundle JSON: {exc}") from exc
    else:
        obj = source
    try:
        legs = tuple(
            TradeLeg(
                exchange=str(leg["exchange"]),
                sold_asset=str(leg["sold"]["asset"]),
                sold_amount=_dec(leg["sold"]["amount"]),
                bought_asset=str(leg["bought"]["asset"]),
                bought_amount=_dec(leg["bought"]["amount"]),
                rate=_dec(leg["rate"]) if "rate" in leg else None,
            )
            for leg in obj["legs"]
        )
        bundle = TransactionBundle(
            legs=legs,
            gas_used=int(obj["gas_used"]),
            gas_price_gwei=_dec(obj["gas_price_gwei"]),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad bundle structure: {exc}") from exc
    with localcontext() as ctx:
        ctx.prec = _PREC
        for k, leg in enumerate(legs):
            if leg.rate is None:
                continue
            if abs(leg.rate * leg.sold_amount - leg.bought_amount) > (
                _RATE_RTOL * abs(leg.bought_amount)
            ):
                raise ConfigError(
                    f"leg {k}: rate {leg.rate} x sold {leg.sold_amount} "
                    f"does not reproduce bought {leg.bought_amount}"
                )
    return bundle


def net_flows(legs: Iterable[TradeLeg]) -> Dict[str, Decimal]:
    """Net position change per asset: bought adds, sold subtracts."""
    with localcontext() as ctx:
        ctx.prec = _PREC
        net: Dict[str, Decimal] = {}
        for leg in legs:
            net[leg.sold_asset] = net.get(leg.sold_asset, Decimal(0)) - leg.sold_amount
            net[leg.bought_asset] = net.get(leg.bought_asset, Decimal(0)) + leg.bought_amount
        return net


def is_pure_revenue(net: Dict[str, Decimal]) -> bool:
    """True when the bundle ends strictly up in every asset it touched.

    Strict: an asset that was traded but nets exactly zero disqualifies the
    bundle — only assets with no flow at all (absent from the map) are
    ignorable pass-throughs.
    """
    return bool(net) and all(v > 0 for v in net.values())


@dataclass(frozen=True)
class RevenueReport:
    net_by_asset: Dict[str, Decimal]
    pure_revenue: bool
    gas_cost_base: Decimal
    profit_base: Decimal
    base_asset: str


def profit(bundle: TransactionBundle, base_asset: str = "ETH") -> RevenueReport:
    """Net base-asset profit after gas.

    gas cost = gas_used * gas_price_gwei * 1e-9 (gwei to base units).
    Raises MissingBase when no leg touches the base asset.
    """
    with localcontext() as ctx:
        ctx.prec = _PREC
        net = net_flows(bundle.legs)
        if base_asset not in net:
            raise MissingBase(f"bundle has no {base_asset} flow")
        gas_cost = Decimal(bundle.gas_used) * bundle.gas_price_gwei * _GWEI
        return RevenueReport(
            net_by_asset=net,
            pure_revenue=is_pure_revenue(net),
            gas_cost_base=gas_cost,
            profit_base=net[base_asset] - gas_cost,
            base_asset=base_asset,
        )


def bundle_graph(bundle: TransactionBundle) -> dict:
    """Flow graph of the bundle: asset nodes, one node per trade leg,
    edges carrying the amounts (as exact strings)."""
    assets = []
    for leg in bundle.legs:
        for a in (leg.sold_asset, leg.bought_asset):
            if a not in assets:
                assets.append(a)
    nodes = [{"id": a, "type": "asset"} for a in assets]
    edges = []
    for k, leg in enumerate(bundle.legs):
        leg_id = f"leg{k}"
        rate = leg.implied_rate()
        nodes.append(
            {
                "id": leg_id,
                "type": "exchange",
                "exchange": leg.exchange,
                "rate": str(rate) if rate is not None else None,
            }
        )
        edges.append({"from": leg.sold_asset, "to": leg_id, "amount": str(leg.sold_amount)})
        edges.append({"from": leg_id, "to": leg.bought_asset, "amount": str(leg.bought_amount)})
    return {"nodes": nodes, "edges": edges}


# ---------------------------------------------------------------------------
# block corpus: explicit fees vs ordering-derived pure revenue


class BlockRecord(NamedTuple):
    block_number: int
    explicit_fees: Decimal
    pure_revenue_oo: Decimal
    block_reward: Decimal


CORPUS_COLUMNS = (
    "block_number",
    "explicit_fees_eth",
    "pure_revenue_oo_eth",
    "block_reward_eth",
)


def load_block_corpus(fileobj) -> List[BlockRecord]:
    """Read a per-block fee corpus CSV; errors carry the offending row number."""
    reader = csv.reader(fileobj)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CORPUS_COLUMNS:
        raise ConfigError(
            f"corpus header must be {','.join(CORPUS_COLUMNS)}, got {header}"
        )
    out = []
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            if len(row) != 4:
                raise ValueError(f"expected 4 columns, got {len(row)}")
            rec = BlockRecord(
                block_number=int(row[0]),
                explicit_fees=Decimal(row[1]),
                pure_revenue_oo=Decimal(row[2]),
                block_reward=Decimal(row[3]),
            )
            if not all(
                v.is_finite() and v >= 0
                for v in (rec.explicit_fees, rec.pure_revenue_oo, rec.block_reward)
            ):
                raise ValueError("fee columns must be finite and non-negative")
            out.append(rec)
        except (ValueError, InvalidOperation, ArithmeticError) as exc:
            raise ConfigError(f"corpus row {row_no}: {exc}") from exc
    return out


def oo_fee_share(block: BlockRecord) -> Decimal:
    """Fraction of the block's miner-extractable fees that came from
    ordering (pure revenue) rather than explicit transaction fees."""
    with localcontext() as ctx:
        ctx.prec = _PREC
        denom = block.explicit_fees + block.pure_revenue_oo
        if denom == 0:
            raise EmptyBlock(f"block {block.block_number} has no fee flow")
        return block.pure_revenue_oo / denom


def undercutting_candidates(
    blocks: Sequence[BlockRecord], threshold: Decimal = Decimal("0.5")
) -> List[BlockRecord]:
    """Blocks where ordering revenue dominates fees beyond `threshold`
    (those are the blocks a fee-undercutting fork would target), richest
    ordering revenue first."""
    hits = []
    for b in blocks:
        denom = b.explicit_fees + b.pure_revenue_oo
        if denom > 0 and b.pure_revenue_oo / denom > threshold:
            hits.append(b)
    return sorted(hits, key=lambda b: (-b.pure_revenue_oo, b.block_number))


def oo_histogram(
    blocks: Sequence[BlockRecord], n_bins: int = 20
) -> List[Tuple[Decimal, Decimal, int]]:
    """Histogram of the ordering-revenue share over [0, 1].

    Bins are [k/n, (k+1)/n), the last closed at 1. Blocks with no fee flow
    are skipped (their share is undefined).
    """
    if n_bins <= 0:
        raise ConfigError("n_bins must be positive")
    counts = [0] * n_bins
    with localcontext() as ctx:
        ctx.prec = _PREC
        for b in blocks:
            denom = b.explicit_fees + b.pure_revenue_oo
            if denom == 0:
                continue
            share = b.pure_revenue_oo / denom
            idx = min(int(share * n_bins), n_bins - 1)
            counts[idx] += 1
    edges = [Decimal(k) / Decimal(n_bins) for k in range(n_bins + 1)]
    return [(edges[k], edges[k + 1], counts[k]) for k in range(n_bins)]


# ---------------------------------------------------------------------------
# forking: rewriting history for a known price move


@dataclass(frozen=True)
class TimeBanditScenario:
    """Rewriting `volume` of base-priced trades after a move from old to new
    price, spending `attack_cost` (rented hashpower, forfeited rewards)."""

    volume: Decimal
    old_price: Decimal
    new_price: Decimal
    attack_cost: Decimal

    def __post_init__(self):
        if self.old_price <= 0:
            raise ConfigError("old_price must be positive")

    @classmethod
    def from_dict(cls, obj: dict) -> "TimeBanditScenario":
        try:
            return cls(
                volume=_dec(obj["volume"]),
                old_price=_dec(obj["old_price"]),
                new_price=_dec(obj["new_price"]),
                attack_cost=_dec(obj["attack_cost"]),
            )
        except KeyError as exc:
            raise ConfigError(f"time-bandit scenario missing {exc}") from exc


@dataclass(frozen=True)
class TimeBanditReport:
    gross: Decimal
    net: Decimal


def time_bandit_profit(scenario: TimeBanditScenario) -> TimeBanditReport:
    """Gross = (volume / old_price) * (new - old): the rewound trades bought
    at the old price and resell at the new one.  Net subtracts the attack
    cost (rented hashpower, forfeited block rewards)."""
    with localcontext() as ctx:
        ctx.prec = _PREC
        gross = (
            scenario.volume
            * (scenario.new_price - scenario.old_price)
            / scenario.old_price
        )
        return TimeBanditReport(gross=gross, net=gross - scenario.attack_cost)
