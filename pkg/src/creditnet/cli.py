"""Command-line front end.

Every subcommand reads its inputs through the module loaders, writes one or
more reports into ``--out`` and a ``manifest.json`` describing the run.
Exit status: 0 on success, 1 on a domain error, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from . import __version__
from .errors import CreditNetError
from .files import (
    dumps_csv,
    dumps_json,
    load_intents,
    load_offer_history,
    load_rate_series,
    load_rate_table,
    load_registry,
    load_snapshot,
    load_txlog,
    snapshot_lines,
)
from .health import (
    DEGREE,
    TX_FREQUENCY,
    credit_acquisition,
    removal_analysis,
    rippling_risk_scan,
    select_disruptive,
    stuck_credit,
)
from .ledger import coloring, format_time, largest_connected_component, normalize_flags, parse_time, to_amount
from .liquidity import LIQUIDITY_COLUMNS, convert_to_common, liquidity_sample, prune_by_currency, to_flow_graph
from .louvain import louvain
from .metrics import basic_metrics, mixing_time_lower_bound, motif_census, second_eigenvalue, strip_leaves
from .offers import RATE_POINT_COLUMNS, classify_transactions, stale_offer_report
from .settlement import execute_transaction
from .synth import SynthConfig, generate_synthetic

log = logging.getLogger("creditnet")

PROG = "creditnet"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class Run:
    """Collects inputs and outputs of one invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out = Path(args.out)
        self.inputs: dict[str, str] = {}
        self.reports: dict[str, str] = {}

    def input(self, path: str | None) -> str | None:
        if path is not None:
            self.inputs[str(path)] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        return path

    def write(self, name: str, text: str) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text, encoding="utf-8")
        self.reports[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()
        log.info("wrote %s", self.out / name)

    def report(self, stem: str, obj: dict, table: tuple[tuple[str, ...], list] | None = None) -> None:
        """JSON by default; with ``--format csv`` the flat table (or key/value rows)."""
        if self.args.format == "csv":
            header, rows = table if table is not None else (("key", "value"), _flatten(obj))
            self.write(f"{stem}.csv", dumps_csv(header, rows))
        else:
            self.write(f"{stem}.json", dumps_json(obj))

    def snapshot(self):
        gateways = load_registry(self.input(self.args.gateways)) if getattr(self.args, "gateways", None) else ()
        snap = load_snapshot(self.input(self.args.snapshot), gateways)
        if getattr(self.args, "lcc", False):
            snap = largest_connected_component(snap)
        return snap


def _flatten(obj, prefix: str = "") -> list[tuple[str, object]]:
    rows = []
    if isinstance(obj, dict):
        for k in sorted(obj, key=str):
            rows.extend(_flatten(obj[k], f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            rows.extend(_flatten(v, f"{prefix}[{i}]"))
    else:
        rows.append((prefix, obj))
    return rows


def _jsonl(records) -> str:
    return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records)


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _window(args) -> tuple[datetime, datetime]:
    try:
        return parse_time(args.start), parse_time(args.end)
    except ValueError as exc:
        raise UsageError(f"bad window bound: {exc}") from None


# subcommands --------------------------------------------------------------------


def cmd_validate(run: Run) -> None:
    snap = run.snapshot()
    run.report(
        "validate",
        {
            "valid": True,
            "timestamp": snap.timestamp,
            "n_wallets": len(snap.wallets),
            "n_links": len(snap.links),
            "n_offers": len(snap.offers),
            "n_gateways": len(snap.gateways & set(snap.wallets)),
            "currencies": sorted(snap.currencies),
        },
    )


def cmd_synth(run: Run) -> None:
    a = run.args
    cfg = SynthConfig(
        n_gateways=a.n_gateways,
        users_per_gateway=a.users_per_gateway,
        inter_gateway_links=a.inter_gateway_links,
        currencies=tuple(_csv_list(a.currencies)),
        balance_range=(to_amount(a.balance_min), to_amount(a.balance_max)),
        limit_multiple=None if a.limit_multiple is None else to_amount(a.limit_multiple),
        ripple_policy=a.ripple_policy,
        seed=a.seed,
        extra_links=a.extra_links,
        market_makers=a.market_makers,
    )
    snap = generate_synthetic(cfg)
    run.write("snapshot.jsonl", _jsonl(snapshot_lines(snap)))
    run.write("registry.txt", "".join(f"{g}\n" for g in sorted(snap.gateways)))
    run.report("synth", {"n_wallets": len(snap.wallets), "n_links": len(snap.links), "n_offers": len(snap.offers)})


def cmd_settle(run: Run) -> None:
    snap = normalize_flags(run.snapshot())
    intents = load_intents(run.input(run.args.intents))
    txs, failures = [], []
    for i, (intent, ts) in enumerate(intents):
        try:
            snap, tx = execute_transaction(snap, intent, timestamp=ts)
            txs.append(tx)
        except CreditNetError as exc:
            failures.append({"index": i, "error": type(exc).__name__, "message": str(exc)})
            log.warning("intent %d failed: %s", i, exc)
    run.write("transactions.jsonl", _jsonl(t.to_record() for t in txs))
    run.write("snapshot_after.jsonl", _jsonl(snapshot_lines(snap)))
    run.report(
        "settle",
        {"n_intents": len(intents), "n_executed": len(txs), "failures": failures},
        (("index", "error", "message"), [(f["index"], f["error"], f["message"]) for f in failures]),
    )


def cmd_metrics(run: Run) -> None:
    snap = run.snapshot()
    rep = basic_metrics(snap).as_dict()
    run.report("metrics", rep, (("metric", "value"), sorted(rep.items())))


def cmd_communities(run: Run) -> None:
    snap = run.snapshot()
    res = louvain(snap, run.args.resolution, run.args.seed)
    obj = {
        "resolution": res.resolution,
        "modularity": res.modularity,
        "pass_modularity": list(res.pass_modularity),
        "n_communities": res.n_communities,
        "sizes": res.sizes(),
        "communities": res.communities,
    }
    run.report("communities", obj, (("wallet", "community"), sorted(res.communities.items())))


def cmd_motifs(run: Run) -> None:
    snap = run.snapshot()
    census = motif_census(snap, coloring(snap))
    obj = {"counts": census.counts, "frequencies": census.frequencies, "total": census.total,
           "most_frequent": census.most_frequent}
    rows = [(k, census.counts[k], census.frequencies[k]) for k in census.counts]
    run.report("motifs", obj, (("pattern", "count", "frequency"), rows))


def cmd_mixing(run: Run) -> None:
    snap = run.snapshot()
    if run.args.strip_leaves:
        snap = strip_leaves(snap)
    lazy = not run.args.plain
    eps = run.args.epsilon
    if not 0.0 < eps < 0.5:
        raise UsageError("--epsilon must lie in (0, 0.5)")
    obj = {
        "epsilon": eps,
        "walk": "lazy" if lazy else "plain",
        "n_wallets": len(snap.wallets),
        "mu": second_eigenvalue(snap, lazy=lazy),
        "lower_bound": mixing_time_lower_bound(snap, eps, lazy=lazy),
    }
    run.report("mixing", obj)


def cmd_liquidity(run: Run) -> None:
    a = run.args
    snap = run.snapshot()
    rates = load_rate_table(run.input(a.rates))
    keep = _csv_list(a.keep) if a.keep else sorted(snap.currencies)
    pruned = prune_by_currency(snap, keep)
    graph = to_flow_graph(convert_to_common(pruned, rates, a.target))
    res = liquidity_sample(graph, a.pairs, a.seed, workers=a.threads)
    rows = [r.row() for r in res.records]
    run.write("liquidity_pairs.csv", dumps_csv(LIQUIDITY_COLUMNS, rows))
    obj = {
        "keep": keep,
        "target": a.target,
        "n_wallets": len(graph.nodes),
        "n_pairs": len(res.records),
        "seed": a.seed,
        "fraction_with_liquidity": res.fraction,
    }
    run.report("liquidity", obj)


def cmd_rippling_risk(run: Run) -> None:
    snap = normalize_flags(run.snapshot())
    rates = load_rate_table(run.input(run.args.rates))
    rep = rippling_risk_scan(snap, rates, run.args.target)
    rows = [(w, c, len(keys)) for w, groups in rep.per_wallet.items() for c, keys in groups]
    run.report("rippling_risk", rep.as_dict(), (("wallet", "currency", "enabled_links"), rows))


def cmd_resilience(run: Run) -> None:
    a = run.args
    snap = run.snapshot()
    txlog = load_txlog(run.input(a.txlog)) if a.txlog else None
    order = select_disruptive(snap, txlog, a.k, a.criterion)
    rec = removal_analysis(snap, order)
    obj = rec.as_dict()
    obj["criterion"] = a.criterion
    # the CSV form is the (removals, lcc_size) curve itself
    run.report("resilience", obj, (("removals", "lcc_size"), rec.rows()))


def cmd_stuck_credit(run: Run) -> None:
    a = run.args
    snap = normalize_flags(run.snapshot())
    rates = load_rate_table(run.input(a.rates))
    rep = stuck_credit(snap, a.gateway, rates, a.target)
    rows = [
        (w, "no_rippling" if w in rep.wallets_no_rippling else "rippling_no_tx", amt) for w, amt in rep.per_wallet.items()
    ]
    run.report("stuck_credit", rep.as_dict(), (("wallet", "class", "stuck"), rows))


def cmd_acquisition(run: Run) -> None:
    a = run.args
    txlog = load_txlog(run.input(a.txlog))
    rates = load_rate_table(run.input(a.rates))
    rep = credit_acquisition(txlog, _csv_list(a.victims), a.gateway, rates, _window(a), a.target)
    rows = [(e.tx_id, e.timestamp, e.victim, e.kind, e.received_value, e.paid_amount, e.paid_currency) for e in rep.events]
    run.report(
        "acquisition",
        rep.as_dict(),
        (("tx_id", "timestamp", "victim", "kind", "received_value", "paid_amount", "paid_currency"), rows),
    )


def cmd_classify_tx(run: Run) -> None:
    snap = run.snapshot()
    txlog = load_txlog(run.input(run.args.txlog))
    rep = classify_transactions(txlog, snap).as_dict()
    run.report("classify_tx", rep, (("bucket", "count"), sorted(rep.items())))


def cmd_stale_offers(run: Run) -> None:
    a = run.args
    txlog = load_txlog(run.input(a.txlog))
    history = load_offer_history(run.input(a.offers))
    series = load_rate_series(run.input(a.rates))
    pair = _csv_list(a.pair)
    if len(pair) != 2:
        raise UsageError("--pair takes two comma-separated currencies")
    rep = stale_offer_report(txlog, history, series, (pair[0], pair[1]), _window(a), a.reference)
    run.write("rate_points.csv", dumps_csv(RATE_POINT_COLUMNS, [p.row() for p in rep.points]))
    rows = [(r.wallet, r.gain, r.n_transactions) for r in rep.exploit_records]
    run.report("stale_offers", rep.as_dict(), (("wallet", "gain", "n_transactions"), rows))


# parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", default="out", help="report directory (default ./out)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    snap_opts = _Parser(add_help=False)
    snap_opts.add_argument("--snapshot", required=True)
    snap_opts.add_argument("--gateways", help="gateway registry file")
    snap_opts.add_argument("--lcc", action="store_true", help="restrict to the largest connected component")

    p = _Parser(prog=PROG, description="IOU credit-network engine and health analyses")
    p.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name: str, fn: Callable, helptext: str, snapshot: bool = True):
        parents = [common, snap_opts] if snapshot else [common]
        sp = sub.add_parser(name, parents=parents, help=helptext)
        sp.set_defaults(fn=fn)
        return sp

    add("validate", cmd_validate, "load and validate a snapshot")

    sp = add("synth", cmd_synth, "generate a synthetic snapshot", snapshot=False)
    sp.add_argument("--n-gateways", type=int, default=3)
    sp.add_argument("--users-per-gateway", type=int, default=10)
    sp.add_argument("--inter-gateway-links", type=int, default=2)
    sp.add_argument("--currencies", default="USD")
    sp.add_argument("--balance-min", default="1")
    sp.add_argument("--balance-max", default="1000")
    sp.add_argument("--limit-multiple", default=None)
    sp.add_argument("--ripple-policy", type=float, default=0.5)
    sp.add_argument("--extra-links", type=int, default=0)
    sp.add_argument("--market-makers", type=int, default=0)

    sp = add("settle", cmd_settle, "apply a file of payment intents")
    sp.add_argument("--intents", required=True)

    add("metrics", cmd_metrics, "degree, clustering, assortativity, density")

    sp = add("communities", cmd_communities, "Louvain communities")
    sp.add_argument("--resolution", type=float, default=0.45)

    add("motifs", cmd_motifs, "colored 3-node motif census")

    sp = add("mixing", cmd_mixing, "mixing-time lower bound")
    sp.add_argument("--epsilon", type=float, default=0.10)
    sp.add_argument("--plain", action="store_true", help="use the non-lazy walk")
    sp.add_argument("--strip-leaves", action="store_true")

    sp = add("liquidity", cmd_liquidity, "max-flow liquidity over sampled pairs")
    sp.add_argument("--rates", required=True)
    sp.add_argument("--keep", help="comma-separated currencies to keep (default: all)")
    sp.add_argument("--target", default="USD")
    sp.add_argument("--pairs", type=int, default=100)

    sp = add("rippling-risk", cmd_rippling_risk, "wallets prone to rippling")
    sp.add_argument("--rates", required=True)
    sp.add_argument("--target", default="USD")

    sp = add("resilience", cmd_resilience, "disruptive-wallet removal")
    sp.add_argument("--txlog")
    sp.add_argument("--k", type=int, default=100)
    sp.add_argument("--criterion", choices=(DEGREE, TX_FREQUENCY), default=DEGREE)

    sp = add("stuck-credit", cmd_stuck_credit, "credit stuck with a gateway")
    sp.add_argument("--gateway", required=True)
    sp.add_argument("--rates", required=True)
    sp.add_argument("--target", default="USD")

    sp = add("acquisition", cmd_acquisition, "how victims acquired gateway credit", snapshot=False)
    sp.add_argument("--txlog", required=True)
    sp.add_argument("--victims", required=True, help="comma-separated wallet ids")
    sp.add_argument("--gateway", required=True)
    sp.add_argument("--rates", required=True)
    sp.add_argument("--start", required=True)
    sp.add_argument("--end", required=True)
    sp.add_argument("--target", default="USD")

    sp = add("classify-tx", cmd_classify_tx, "bucket a transaction log")
    sp.add_argument("--txlog", required=True)

    sp = add("stale-offers", cmd_stale_offers, "stale-offer gains and exposure", snapshot=False)
    sp.add_argument("--txlog", required=True)
    sp.add_argument("--offers", required=True, help="offer observation history")
    sp.add_argument("--rates", required=True, help="reference rate series CSV")
    sp.add_argument("--pair", default="XRP,BTC")
    sp.add_argument("--start", required=True)
    sp.add_argument("--end", required=True)
    sp.add_argument("--reference", default="USD")

    return p


def _setup_logging() -> None:
    level = os.environ.get("CREDITNET_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args, unknown = parser.parse_known_args(argv)
        if unknown:
            for flag in unknown:
                print(f"{PROG}: unrecognized argument: {flag}", file=sys.stderr)
            return 2
        if args.threads < 1:
            raise UsageError("--threads must be positive")
    except UsageError as exc:
        print(f"{PROG}: {exc}", file=sys.stderr)
        return 2

    run = Run(args)
    started = datetime.now(timezone.utc)
    try:
        args.fn(run)
    except UsageError as exc:
        print(f"{PROG}: {exc}", file=sys.stderr)
        return 2
    except CreditNetError as exc:
        print(f"{PROG}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"{PROG}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    manifest = {
        "command": args.command,
        "argv": argv,
        "inputs": run.inputs,
        "seed": args.seed,
        "version": __version__,
        "started": format_time(started),
        "finished": format_time(datetime.now(timezone.utc)),
        "reports": run.reports,
    }
    run.out.mkdir(parents=True, exist_ok=True)
    (run.out / "manifest.json").write_text(dumps_json(manifest), encoding="utf-8")
    return 0


if __name__ == "__main__":
    sys.exit(main())
