"""Detecting live bidding wars in an observed transaction stream.

A trace is a time-ordered list of mempool observations (sender, nonce, gas
price).  A sender re-broadcasting the same nonce at a strictly higher price
is a *replacement* — the on-chain signature of a raise.  Replacements priced
far above the going rate mark auctions worth slicing out; within a sliced
window, per-bot raise sizes and response latencies summarize the war.

Gas prices are Decimals (exact as printed); observation times are integer
microseconds.
"""

from __future__ import annotations

import csv
import math
import statistics
from bisect import insort, bisect_left
from dataclasses import dataclass, replace
from decimal import Decimal, InvalidOperation
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Tuple

from .core import Bid, BidLog, ConfigError, TimePoint, to_micros

MARKET_WINDOW = 1000  # trailing records in the default market-price median
HIGH_VALUE_RATIO = Decimal(10)


class TraceRecord(NamedTuple):
    time: TimePoint  # microseconds
    sender: str
    nonce: int
    gas_price: Decimal  # gwei
    gas_limit: int
    tx_hash: str


TRACE_COLUMNS = (
    "observed_time_s",
    "sender",
    "nonce",
    "gas_price_gwei",
    "gas_limit",
    "tx_hash",
)


def load_trace_csv(fileobj) -> List[TraceRecord]:
    """Read a trace CSV; rows are sorted by observed time (stable)."""
    reader = csv.reader(fileobj)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != TRACE_COLUMNS:
        raise ConfigError(
            f"trace header must be {','.join(TRACE_COLUMNS)}, got {header}"
        )
    out = []
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            if len(row) != 6:
                raise ValueError(f"expected 6 columns, got {len(row)}")
            time_s = float(row[0])
            price = Decimal(row[3])
            if not math.isfinite(time_s) or not price.is_finite():
                raise ValueError("time and gas price must be finite")
            out.append(
                TraceRecord(
                    time=to_micros(time_s),
                    sender=row[1],
                    nonce=int(row[2]),
                    gas_price=price,
                    gas_limit=int(row[4]),
                    tx_hash=row[5],
                )
            )
        except (ValueError, InvalidOperation) as exc:
            raise ConfigError(f"trace row {row_no}: {exc}") from exc
    out.sort(key=lambda r: r.time)
    return out


def write_trace_csv(records: Iterable[TraceRecord], fileobj) -> None:
    writer = csv.writer(fileobj, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for r in records:
        writer.writerow(
            (
                f"{r.time / 10**6:.6f}",
                r.sender,
                r.nonce,
                str(r.gas_price),
                r.gas_limit,
                r.tx_hash,
            )
        )


def records_from_log(log: BidLog) -> List[TraceRecord]:
    """View an engine bid log as a trace (prices carried over verbatim)."""
    return [
        TraceRecord(
            time=b.time,
            sender=f"player{b.player}",
            nonce=0,
            gas_price=Decimal(b.price),
            gas_limit=21000,
            tx_hash=f"sim{i}",
        )
        for i, b in enumerate(log)
    ]


def records_from_event_csv(fileobj) -> List[TraceRecord]:
    """Extract published bids from an engine event CSV as a trace."""
    reader = csv.DictReader(fileobj)
    out = []
    for row_no, row in enumerate(reader, start=2):
        try:
            if row["event_kind"] != "publish":
                continue
            out.append(
                TraceRecord(
                    time=int(row["time_us"]),
                    sender=f"player{int(row['player'])}",
                    nonce=0,
                    gas_price=Decimal(row["price"]),
                    gas_limit=21000,
                    tx_hash=f"sim{row_no}",
                )
            )
        except (KeyError, TypeError, ValueError, InvalidOperation) as exc:
            raise ConfigError(f"event row {row_no}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# replacements


class Replacement(NamedTuple):
    index: int  # position in the trace
    record: TraceRecord
    previous: TraceRecord
    high_value: bool


def _rolling_medians(trace) -> List[Optional[Decimal]]:
    """Median gas price of the trailing MARKET_WINDOW records before each
    index (None while no history exists)."""
    medians: List[Optional[Decimal]] = []
    window: List[Decimal] = []  # kept sorted
    fifo: List[Decimal] = []
    for rec in trace:
        medians.append(statistics.median(window) if window else None)
        insort(window, rec.gas_price)
        fifo.append(rec.gas_price)
        if len(fifo) > MARKET_WINDOW:
            gone = fifo.pop(0)
            window.pop(bisect_left(window, gone))
    return medians


def detect_replacements(
    trace,
    market_price_fn: Optional[Callable[[TimePoint], Optional[Decimal]]] = None,
    high_value_ratio: Decimal = HIGH_VALUE_RATIO,
) -> List[Replacement]:
    """Same-(sender, nonce) rebroadcasts at strictly higher prices.

    A replacement is high-value when its price reaches ``high_value_ratio``
    times the market price — by default the rolling median of the trailing
    1,000 observations, or whatever ``market_price_fn`` returns for the
    record's time.
    """
    medians = _rolling_medians(trace) if market_price_fn is None else None
    latest: Dict[Tuple[str, int], TraceRecord] = {}
    out = []
    for i, rec in enumerate(trace):
        key = (rec.sender, rec.nonce)
        prev = latest.get(key)
        if prev is not None and rec.gas_price > prev.gas_price:
            market = (
                market_price_fn(rec.time) if market_price_fn is not None else medians[i]
            )
            high = market is not None and market > 0 and rec.gas_price >= high_value_ratio * market
            out.append(Replacement(index=i, record=rec, previous=prev, high_value=high))
        latest[key] = rec
    return out


# ---------------------------------------------------------------------------
# auction windows


@dataclass(frozen=True)
class AuctionWindow:
    start: TimePoint
    end: TimePoint
    records: Tuple[TraceRecord, ...]
    triggers: Tuple[Replacement, ...]


def slice_auctions(
    trace,
    window_radius_s: float = 30.0,
    market_price_fn: Optional[Callable[[TimePoint], Optional[Decimal]]] = None,
    high_value_ratio: Decimal = HIGH_VALUE_RATIO,
) -> List[AuctionWindow]:
    """Cut the trace into auction windows around high-value replacements.

    Each trigger opens a window of +-window_radius_s.  Windows that overlap
    in time *and* contain replacement activity from a common (sender, nonce)
    belong to the same auction and are merged (transitively), so one war
    yields one window no matter how many of its raises triggered.
    """
    reps = detect_replacements(trace, market_price_fn, high_value_ratio)
    triggers = [r for r in reps if r.high_value]
    if not triggers:
        return []
    radius = to_micros(window_radius_s)
    spans = [(t.record.time - radius, t.record.time + radius) for t in triggers]
    keys = []
    for lo, hi in spans:
        keys.append(
            {(r.record.sender, r.record.nonce) for r in reps if lo <= r.record.time <= hi}
        )
    parent = list(range(len(triggers)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a in range(len(triggers)):
        for b in range(a + 1, len(triggers)):
            if spans[a][0] <= spans[b][1] and spans[b][0] <= spans[a][1] and keys[a] & keys[b]:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[rb] = ra
    groups: Dict[int, List[int]] = {}
    for i in range(len(triggers)):
        groups.setdefault(find(i), []).append(i)
    windows = []
    for members in groups.values():
        lo = min(spans[i][0] for i in members)
        hi = max(spans[i][1] for i in members)
        windows.append(
            AuctionWindow(
                start=lo,
                end=hi,
                records=tuple(r for r in trace if lo <= r.time <= hi),
                triggers=tuple(triggers[i] for i in sorted(members)),
            )
        )
    windows.sort(key=lambda w: w.start)
    return windows


def prune_bots(window: AuctionWindow, min_bids: int = 4) -> AuctionWindow:
    """Drop senders with fewer than min_bids observations in the window —
    too little activity to be an auction participant."""
    counts: Dict[str, int] = {}
    for r in window.records:
        counts[r.sender] = counts.get(r.sender, 0) + 1
    keep = {s for s, n in counts.items() if n >= min_bids}
    return replace(
        window,
        records=tuple(r for r in window.records if r.sender in keep),
        triggers=tuple(t for t in window.triggers if t.record.sender in keep),
    )


# ---------------------------------------------------------------------------
# per-bot statistics


@dataclass(frozen=True)
class BotAuctionStats:
    sender: str
    num_raises: int
    raise_pcts: Tuple[float, ...]
    median_raise_pct: Optional[float]
    mean_response_latency_s: Optional[float]


def auction_stats(window: AuctionWindow) -> List[BotAuctionStats]:
    """Raise sizes and response latencies per sender in one window.

    A raise is a successive same-nonce price increase; its size is the price
    ratio minus one, in percent.  Response latency of one bid is the gap to
    the latest earlier bid by any *other* sender in the window.
    """
    records = sorted(window.records, key=lambda r: r.time)
    senders = sorted({r.sender for r in records})
    out = []
    for sender in senders:
        own = [r for r in records if r.sender == sender]
        last_by_nonce: Dict[int, TraceRecord] = {}
        pcts: List[float] = []
        for r in own:
            prev = last_by_nonce.get(r.nonce)
            if prev is not None and r.gas_price > prev.gas_price:
                pcts.append((float(r.gas_price / prev.gas_price) - 1.0) * 100.0)
            last_by_nonce[r.nonce] = r
        gaps: List[float] = []
        for r in own:
            prior = [o.time for o in records if o.sender != sender and o.time < r.time]
            if prior:
                gaps.append((r.time - max(prior)) / 10**6)
        out.append(
            BotAuctionStats(
                sender=sender,
                num_raises=len(pcts),
                raise_pcts=tuple(pcts),
                median_raise_pct=statistics.median(pcts) if pcts else None,
                mean_response_latency_s=statistics.fmean(gaps) if gaps else None,
            )
        )
    return out


def auction_summary(
    auction_id,
    stats: List[BotAuctionStats],
    latency_bounds: Tuple[float, float] = (0.0, 1.0),
) -> Tuple:
    """One aggregate row per auction: (id, median raise %, mean latency, raises).

    The raise median pools every raise in the auction; the latency mean
    averages the per-bot means that fall inside ``latency_bounds`` (bots
    reacting implausibly fast or slow are measurement noise, not players).
    """
    all_pcts = [p for s in stats for p in s.raise_pcts]
    lats = [
        s.mean_response_latency_s
        for s in stats
        if s.mean_response_latency_s is not None
        and latency_bounds[0] <= s.mean_response_latency_s <= latency_bounds[1]
    ]
    return (
        auction_id,
        statistics.median(all_pcts) if all_pcts else None,
        statistics.fmean(lats) if lats else None,
        sum(s.num_raises for s in stats),
    )
