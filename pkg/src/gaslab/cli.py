"""Command-line front end.

Subcommands: simulate | sweep | nash | analyze | value.  Every command takes
a JSON config (--config), writes its outputs under --out, and records a
metadata.json with the tool version, effective seed, and the config's SHA-256
— never a timestamp — so re-running the same invocation reproduces every
output byte for byte.  Figures render through the Agg backend with stripped
writer metadata for the same reason.  All files are written atomically
(temp file + rename).

Exit codes: 0 success, 2 configuration problem, 3 strategy fault.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from decimal import Decimal
from pathlib import Path

from . import __version__
from .core import ConfigError, GameParams, money_float, money_str, to_micros
from .engine import (
    StrategyFault,
    derive_run_seed,
    estimate_payoff,
    execute,
    write_event_log,
)
from .equilibrium import EquilibriumParams, check_nash
from .strategies import build_strategy
from . import traces as traces_mod
from . import value as value_mod

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAULT = 3


# ---------------------------------------------------------------------------
# deterministic, atomic output


def _write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _write_text(path: Path, text: str) -> None:
    _write_bytes(path, text.encode("utf-8"))


def _write_json(path: Path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    _write_text(path, buf.getvalue())


def _write_table(path_base: Path, fmt: str, header, rows) -> None:
    """Delimited output in the requested format (csv default, json mirror)."""
    if fmt == "json":
        _write_json(
            path_base.with_suffix(".json"),
            [dict(zip(header, row)) for row in rows],
        )
    else:
        _write_csv(path_base.with_suffix(".csv"), header, rows)


def _figure(path: Path, draw) -> None:
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8.0, 5.0), dpi=100)
    try:
        draw(ax)
        fig.tight_layout()
        buf = io.BytesIO()
        # Drop the library's self-identification so output bytes are stable.
        fig.savefig(buf, format="png", metadata={"Software": None})
    finally:
        plt.close(fig)
    _write_bytes(path, buf.getvalue())


def _load_config(path: str):
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return json.loads(raw.decode("utf-8")), raw, p.parent
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad JSON in {path}: {exc}") from exc


def _metadata(out: Path, command: str, raw: bytes, seed, runs, fmt: str) -> None:
    _write_json(
        out / "metadata.json",
        {
            "tool": "gaslab",
            "version": __version__,
            "command": command,
            "seed": seed,
            "runs": runs,
            "format": fmt,
            "config_sha256": hashlib.sha256(raw).hexdigest(),
        },
    )


def _bid_dict(bid):
    if bid is None:
        return None
    return {"time_us": bid.time, "price": money_str(bid.price), "player": bid.player}


# ---------------------------------------------------------------------------
# simulate


def _build_game(config: dict):
    try:
        params = GameParams.from_dict(config["game"])
        players = config["players"]
        if len(players) != 2:
            raise ConfigError("need exactly 2 players")
        strats = [build_strategy(p["strategy"], params) for p in players]
        deltas = [to_micros(float(p.get("delta_s", 0.0))) for p in players]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad simulate config: {exc}") from exc
    return params, strats, deltas


def cmd_simulate(config: dict, out: Path, seed: int, runs: int, fmt: str) -> None:
    params, strats, deltas = _build_game(config)
    exemplar = execute(
        strats[0], deltas[0], strats[1], deltas[1], params,
        derive_run_seed(seed, 0), collect_events=True,
    )
    _write_json(
        out / "outcome.json",
        {
            "winner": exemplar.winner,
            "winning_bid": _bid_dict(exemplar.winning_bid),
            "losing_bid": _bid_dict(exemplar.losing_bid),
            "payoffs": [money_str(x) for x in exemplar.payoffs],
            "miner_revenue": money_str(exemplar.miner_revenue),
            "end_time_us": exemplar.end_time,
            "dropped": list(exemplar.dropped),
            "log": [_bid_dict(b) for b in exemplar.log],
        },
    )
    buf = io.StringIO()
    write_event_log(exemplar.events, buf)
    _write_text(out / "events.csv", buf.getvalue())

    if runs > 1:
        rows = []
        p0 = []
        for i in range(runs):
            o = execute(
                strats[0], deltas[0], strats[1], deltas[1], params,
                derive_run_seed(seed, i),
            )
            rows.append(
                (
                    i,
                    o.winner if o.winner is not None else None,
                    money_str(o.payoffs[0]),
                    money_str(o.payoffs[1]),
                    money_str(o.miner_revenue),
                    o.end_time,
                )
            )
            p0.append(money_float(o.payoffs[0]))
        report = estimate_payoff(
            strats[0], deltas[0], strats[1], deltas[1], params, runs, seed
        )
        _write_json(
            out / "summary.json",
            {
                "n_runs": report.n_runs,
                "seed": seed,
                "player0_mean": report.mean,
                "player0_std_error": report.std_error,
                "player0_ci95": list(report.ci95),
            },
        )
        _write_table(
            out / "runs",
            fmt,
            ("run", "winner", "payoff0", "payoff1", "miner_revenue", "end_time_us"),
            rows,
        )

        def draw(ax):
            ax.hist(p0, bins=40, color="#4878a8", edgecolor="black", linewidth=0.3)
            ax.set_xlabel("player 0 payoff")
            ax.set_ylabel("runs")
            ax.set_title(f"payoff distribution over {runs} runs")

        _figure(out / "simulate.png", draw)
    else:

        def draw(ax):
            if exemplar.log:
                ts = [b.time / 1e6 for b in exemplar.log]
                ps = [money_float(b.price) for b in exemplar.log]
                for player, marker in ((0, "o"), (1, "s")):
                    sel = [
                        (t, p_)
                        for t, p_, b in zip(ts, ps, exemplar.log)
                        if b.player == player
                    ]
                    if sel:
                        ax.step(
                            [t for t, _ in sel],
                            [p_ for _, p_ in sel],
                            where="post",
                            marker=marker,
                            label=f"player {player}",
                        )
                ax.legend()
            ax.axvline(exemplar.end_time / 1e6, color="red", linestyle="--", lw=1)
            ax.set_xlabel("time (s)")
            ax.set_ylabel("bid price")
            ax.set_title("published bids")

        _figure(out / "simulate.png", draw)


# ---------------------------------------------------------------------------
# sweep


def _set_path(obj, dotted: str, value) -> None:
    parts = dotted.split(".")
    cur = obj
    for part in parts[:-1]:
        cur = cur[int(part)] if isinstance(cur, list) else cur[part]
    last = parts[-1]
    if isinstance(cur, list):
        cur[int(last)] = value
    else:
        cur[last] = value


def cmd_sweep(config: dict, out: Path, seed: int, runs: int, fmt: str) -> None:
    try:
        base = config["base"]
        axis = config["axis"]
        path = axis["path"]
        values = axis["values"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad sweep config: {exc}") from exc
    rows = []
    for k, v in enumerate(values):
        cfg = copy.deepcopy(base)
        try:
            _set_path(cfg, path, v)
        except (KeyError, IndexError, ValueError, TypeError) as exc:
            raise ConfigError(f"bad axis path {path!r}: {exc}") from exc
        params, strats, deltas = _build_game(cfg)
        report = estimate_payoff(
            strats[0], deltas[0], strats[1], deltas[1], params, runs,
            derive_run_seed(seed, k),
        )
        rows.append(
            (v, report.mean, report.std_error, report.ci95[0], report.ci95[1], runs)
        )
    _write_table(
        out / "sweep",
        fmt,
        (path, "mean", "std_error", "ci95_low", "ci95_high", "n_runs"),
        rows,
    )

    def draw(ax):
        xs = list(range(len(values)))
        ax.errorbar(
            xs,
            [r[1] for r in rows],
            yerr=[1.96 * r[2] for r in rows],
            marker="o",
            capsize=3,
        )
        ax.set_xticks(xs)
        ax.set_xticklabels([str(v) for v in values], rotation=30)
        ax.set_xlabel(path)
        ax.set_ylabel("player 0 mean payoff")
        ax.set_title(f"sweep over {path} ({runs} runs/point)")

    _figure(out / "sweep.png", draw)


# ---------------------------------------------------------------------------
# nash


def cmd_nash(config: dict, out: Path, fmt: str) -> None:
    # seed/runs are CLI-level keys allowed in any config; the rest must be
    # equilibrium parameters.
    eq = EquilibriumParams.from_dict(
        {k: v for k, v in config.items() if k not in ("seed", "runs")}
    )
    report = check_nash(eq)
    _write_table(
        out / "nash",
        fmt,
        ("interval_start_s", "bidder_payoff", "nonbidder_payoff", "deviate_payoff"),
        [
            (
                r.interval_start_s,
                r.e_cooperate_bidder,
                r.e_cooperate_nonbidder,
                r.e_deviate_nonbidder,
            )
            for r in report.rows
        ],
    )
    _write_json(
        out / "verdict.json",
        {
            "verdict": report.verdict,
            "broken_at": report.broken_at,
            "i_max": report.i_max,
            "params": eq.to_dict(),
        },
    )

    def draw(ax):
        xs = [r.interval_start_s for r in report.rows]
        ax.plot(xs, [r.e_cooperate_bidder for r in report.rows], marker="o",
                label="cooperate (interval's bidder)")
        ax.plot(xs, [r.e_cooperate_nonbidder for r in report.rows], marker="s",
                label="cooperate (non-bidder)")
        ax.plot(xs, [r.e_deviate_nonbidder for r in report.rows], marker="^",
                label="deviate (non-bidder)")
        if report.broken_at is not None:
            ax.axvline(
                report.rows[report.broken_at].interval_start_s,
                color="red", linestyle="--", lw=1,
                label=f"broken at j={report.broken_at}",
            )
        ax.set_xlabel("interval start (s)")
        ax.set_ylabel("expected payoff")
        ax.set_title(report.verdict)
        ax.legend()

    _figure(out / "nash.png", draw)


# ---------------------------------------------------------------------------
# analyze


def cmd_analyze(config: dict, config_dir: Path, out: Path, fmt: str) -> None:
    try:
        trace_path = config_dir / config["trace"]
        radius = float(config.get("window_radius_s", 30.0))
        min_bids = int(config.get("min_bids", 4))
        ratio = Decimal(str(config.get("high_value_ratio", 10)))
        bounds = tuple(config.get("latency_bounds", (0.0, 1.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad analyze config: {exc}") from exc
    try:
        with open(trace_path, newline="") as f:
            trace = traces_mod.load_trace_csv(f)
    except OSError as exc:
        raise ConfigError(f"cannot read trace {trace_path}: {exc}") from exc
    windows = traces_mod.slice_auctions(
        trace, window_radius_s=radius, high_value_ratio=ratio
    )
    pruned = [traces_mod.prune_bots(w, min_bids) for w in windows]
    all_stats = [traces_mod.auction_stats(w) for w in pruned]

    _write_json(
        out / "auctions.json",
        [
            {
                "auction_id": i,
                "start_s": w.start / 1e6,
                "end_s": w.end / 1e6,
                "n_records": len(w.records),
                "n_triggers": len(w.triggers),
                "bots": [
                    {
                        "sender": s.sender,
                        "num_raises": s.num_raises,
                        "median_raise_pct": s.median_raise_pct,
                        "mean_response_latency_s": s.mean_response_latency_s,
                    }
                    for s in stats
                ],
            }
            for i, (w, stats) in enumerate(zip(pruned, all_stats))
        ],
    )
    _write_table(
        out / "auction_stats",
        fmt,
        ("auction_id", "median_raise_pct", "mean_latency_s", "num_raises"),
        [
            traces_mod.auction_summary(i, stats, bounds)
            for i, stats in enumerate(all_stats)
        ],
    )

    def draw(ax):
        xs, ys = [], []
        for stats in all_stats:
            for s in stats:
                if s.median_raise_pct is not None and s.mean_response_latency_s is not None:
                    xs.append(s.mean_response_latency_s)
                    ys.append(s.median_raise_pct)
        ax.scatter(xs, ys, s=18, alpha=0.7)
        ax.set_xlabel("mean response latency (s)")
        ax.set_ylabel("median raise (%)")
        ax.set_title(f"{len(pruned)} auctions, {len(xs)} bots")

    _figure(out / "analyze.png", draw)


# ---------------------------------------------------------------------------
# value


def cmd_value(config: dict, config_dir: Path, out: Path, fmt: str) -> None:
    kind = config.get("kind")
    if kind == "bundle":
        try:
            text = (config_dir / config["input"]).read_text()
        except (KeyError, OSError) as exc:
            raise ConfigError(f"cannot read bundle: {exc}") from exc
        bundle = value_mod.parse_bundle(text)
        report = value_mod.profit(bundle, base_asset=config.get("base_asset", "ETH"))
        _write_json(
            out / "revenue.json",
            {
                "net_by_asset": {k: str(v) for k, v in sorted(report.net_by_asset.items())},
                "pure_revenue": report.pure_revenue,
                "gas_cost_base": str(report.gas_cost_base),
                "profit_base": str(report.profit_base),
                "base_asset": report.base_asset,
            },
        )
        _write_json(out / "trade_graph.json", value_mod.bundle_graph(bundle))

        def draw(ax):
            assets = sorted(report.net_by_asset)
            vals = [float(report.net_by_asset[a]) for a in assets]
            ax.bar(assets, vals, color=["#2a7" if v >= 0 else "#a33" for v in vals])
            ax.axhline(0, color="black", lw=0.8)
            ax.set_ylabel("net flow")
            ax.set_title(
                f"pure revenue: {report.pure_revenue}; "
                f"profit {report.profit_base} {report.base_asset}"
            )

        _figure(out / "value.png", draw)
    elif kind == "corpus":
        try:
            path = config_dir / config["input"]
            threshold = Decimal(str(config.get("threshold", "0.5")))
            bins = int(config.get("bins", 20))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad corpus config: {exc}") from exc
        try:
            with open(path, newline="") as f:
                blocks = value_mod.load_block_corpus(f)
        except OSError as exc:
            raise ConfigError(f"cannot read corpus {path}: {exc}") from exc
        share_rows = []
        for b in blocks:
            try:
                share_rows.append((b.block_number, str(value_mod.oo_fee_share(b))))
            except value_mod.EmptyBlock:
                share_rows.append((b.block_number, None))
        _write_table(out / "shares", fmt, ("block_number", "oo_share"), share_rows)
        hist = value_mod.oo_histogram(blocks, bins)
        _write_table(
            out / "histogram",
            fmt,
            ("bin_low", "bin_high", "count"),
            [(str(lo), str(hi), n) for lo, hi, n in hist],
        )
        hits = value_mod.undercutting_candidates(blocks, threshold)
        _write_table(
            out / "undercutting",
            fmt,
            ("block_number", "oo_share", "pure_revenue_oo_eth"),
            [
                (b.block_number, str(value_mod.oo_fee_share(b)), str(b.pure_revenue_oo))
                for b in hits
            ],
        )

        def draw(ax):
            centers = [float((lo + hi) / 2) for lo, hi, _ in hist]
            counts = [n for _, _, n in hist]
            ax.bar(centers, counts, width=1.0 / bins * 0.95, color="#4878a8")
            ax.set_yscale("symlog")
            ax.axvline(float(threshold), color="red", linestyle="--", lw=1,
                       label=f"undercut threshold ({len(hits)} blocks above)")
            ax.set_xlabel("ordering revenue share of block fees")
            ax.set_ylabel("blocks")
            ax.legend()

        _figure(out / "value.png", draw)
    elif kind == "time_bandit":
        if "scenario" in config:
            scen_obj = config["scenario"]
        else:
            try:
                scen_obj = json.loads(
                    (config_dir / config["input"]).read_text(), parse_float=Decimal
                )
            except (KeyError, OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read scenario: {exc}") from exc
        scenario = value_mod.TimeBanditScenario.from_dict(scen_obj)
        report = value_mod.time_bandit_profit(scenario)
        _write_json(
            out / "time_bandit.json",
            {
                "gross": str(report.gross),
                "net": str(report.net),
                "attack_cost": str(scenario.attack_cost),
            },
        )

        def draw(ax):
            ax.bar(
                ["gross", "attack cost", "net"],
                [float(report.gross), -float(scenario.attack_cost), float(report.net)],
                color=["#2a7", "#a33", "#47a"],
            )
            ax.axhline(0, color="black", lw=0.8)
            ax.set_ylabel("value")
            ax.set_title("rewrite profitability")

        _figure(out / "value.png", draw)
    else:
        raise ConfigError(
            f"value kind must be bundle|corpus|time_bandit, got {kind!r}"
        )


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gaslab",
        description="Bidding-war simulator, equilibrium checker, and chain analytics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "run auctions and report outcomes"),
        ("sweep", "repeat a simulation over one varying parameter"),
        ("nash", "closed-form cooperate-vs-deviate check"),
        ("analyze", "find and summarize auctions in a mempool trace"),
        ("value", "bundle/corpus/fork value accounting"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="JSON config path")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="master seed")
        sp.add_argument("--runs", type=int, default=None, help="Monte Carlo runs")
        sp.add_argument("--format", choices=("csv", "json"), default="csv",
                        dest="fmt", help="delimited output format")
    args = parser.parse_args(argv)

    try:
        config, raw, config_dir = _load_config(args.config)
        seed = args.seed if args.seed is not None else int(config.get("seed", 0))
        default_runs = 1 if args.command == "simulate" else 200
        runs = args.runs if args.runs is not None else int(config.get("runs", default_runs))
        if runs < 1:
            raise ConfigError("runs must be >= 1")
        out = Path(args.out)
        if args.command == "simulate":
            cmd_simulate(config, out, seed, runs, args.fmt)
        elif args.command == "sweep":
            cmd_sweep(config, out, seed, runs, args.fmt)
        elif args.command == "nash":
            cmd_nash(config, out, args.fmt)
        elif args.command == "analyze":
            cmd_analyze(config, config_dir, out, args.fmt)
        elif args.command == "value":
            cmd_value(config, config_dir, out, args.fmt)
        _metadata(out, args.command, raw, seed, runs, args.fmt)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StrategyFault as exc:
        print(f"strategy fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
