"""Health checks: rippling exposure, resilience to wallet removal, credit
stuck with a faulty gateway and how victims acquired that credit."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from decimal import Decimal
from typing import Iterable, Sequence

from .errors import EmptyWindow, MissingTxLog, NotAGateway, UnknownWallet
from .ledger import UNBOUNDED, ZERO, CreditLink, LedgerSnapshot, components, largest_component
from .liquidity import Arc, FlowGraph, max_flow
from .rates import RateTable
from .settlement import LINK_INCREASE, Transaction

DEGREE = "degree"
TX_FREQUENCY = "tx_frequency"


# rippling risk -------------------------------------------------------------------


@dataclass(frozen=True)
class RipplingRiskReport:
    target: str
    prone_wallets: tuple[str, ...]
    per_wallet: dict[str, list[tuple[str, list[tuple[str, str, str]]]]]
    credit_at_risk: Decimal
    limit_gap_exposure: Decimal

    def as_dict(self) -> dict:
        return {
            "target": self.target,
            "n_prone": len(self.prone_wallets),
            "prone_wallets": list(self.prone_wallets),
            "per_wallet": {
                w: [{"currency": c, "links": [list(k) for k in keys]} for c, keys in groups]
                for w, groups in self.per_wallet.items()
            },
            "credit_at_risk": self.credit_at_risk,
            "limit_gap_exposure": self.limit_gap_exposure,
        }


def rippling_groups(snapshot: LedgerSnapshot, wallet: str) -> dict[str, list[CreditLink]]:
    """Currency -> links of ``wallet`` whose own side allows rippling, for
    currencies with at least two such links."""
    by_cur: dict[str, list[CreditLink]] = defaultdict(list)
    for l in snapshot.links_by_wallet[wallet]:
        if not snapshot.no_ripple(l, wallet):
            by_cur[l.currency].append(l)
    return {c: ls for c, ls in sorted(by_cur.items()) if len(ls) >= 2}


def rippling_risk_scan(snapshot: LedgerSnapshot, rates: RateTable, target: str = "USD") -> RipplingRiskReport:
    prone = []
    per_wallet = {}
    at_risk = ZERO
    gap = ZERO
    for w in sorted(snapshot.wallets):
        if w in snapshot.gateways:
            continue
        groups = rippling_groups(snapshot, w)
        if not groups:
            continue
        prone.append(w)
        per_wallet[w] = [(c, [l.key for l in ls]) for c, ls in groups.items()]
        for c, ls in groups.items():
            for l in ls:
                if l.other(w) in snapshot.gateways:
                    at_risk += rates.convert(l.balance, c, target)
                if l.bounded:
                    gap += rates.convert(l.headroom, c, target)
    return RipplingRiskReport(target, tuple(prone), per_wallet, at_risk, gap)


# resilience ----------------------------------------------------------------------


def select_disruptive(
    snapshot: LedgerSnapshot,
    txlog: Iterable[Transaction] | None = None,
    k: int = 100,
    criterion: str = DEGREE,
) -> list[str]:
    if criterion == DEGREE:
        score = {w: len(n) for w, n in snapshot.adjacency.items()}
    elif criterion == TX_FREQUENCY:
        if txlog is None:
            raise MissingTxLog("tx_frequency selection needs a transaction log")
        score = dict.fromkeys(snapshot.wallets, 0)
        for tx in txlog:
            for w in tx.participants:
                if w in score:
                    score[w] += 1
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    return sorted(score, key=lambda w: (-score[w], w))[:k]


@dataclass(frozen=True)
class ResilienceRecord:
    removed: tuple[str, ...]
    lcc_sizes: tuple[int, ...]
    rsl_factors: tuple[float, ...]
    initial_lcc: int = 0

    def rows(self) -> list[tuple[int, int]]:
        return [(i + 1, s) for i, s in enumerate(self.lcc_sizes)]

    def as_dict(self) -> dict:
        return {
            "initial_lcc": self.initial_lcc,
            "removed": list(self.removed),
            "lcc_sizes": list(self.lcc_sizes),
            "rsl_factors": [None if math.isnan(r) else r for r in self.rsl_factors],
        }


def rsl_factor(n_remaining: int, lcc_size: int) -> float:
    """Ideal half split over the actual largest component; NaN when empty."""
    if lcc_size == 0:
        return math.nan
    return (n_remaining / 2.0) / lcc_size


def removal_analysis(snapshot: LedgerSnapshot, removal_order: Sequence[str]) -> ResilienceRecord:
    unknown = [w for w in removal_order if w not in snapshot.wallets]
    if unknown:
        raise UnknownWallet(f"not in snapshot: {unknown[:5]}")
    if len(set(removal_order)) != len(removal_order):
        raise ValueError("removal order repeats a wallet")
    adj = snapshot.adjacency
    alive = set(snapshot.wallets)
    initial = len(largest_component(components(adj, alive)))
    sizes, factors = [], []
    for w in removal_order:
        alive.discard(w)
        lcc = len(largest_component(components(adj, alive)))
        sizes.append(lcc)
        factors.append(rsl_factor(len(alive), lcc))
    return ResilienceRecord(tuple(removal_order), tuple(sizes), tuple(factors), initial)


# stuck credit --------------------------------------------------------------------


@dataclass(frozen=True)
class StuckCreditReport:
    gateway: str
    target: str
    wallets_no_rippling: tuple[str, ...]
    wallets_rippling_no_tx: tuple[str, ...]
    stuck_total: Decimal
    per_wallet: dict[str, Decimal] = field(default_factory=dict)
    stuck_links: tuple[tuple[str, str, str], ...] = ()

    def as_dict(self) -> dict:
        return {
            "gateway": self.gateway,
            "target": self.target,
            "wallets_no_rippling": list(self.wallets_no_rippling),
            "wallets_rippling_no_tx": list(self.wallets_rippling_no_tx),
            "stuck_total": self.stuck_total,
            "per_wallet": self.per_wallet,
            "stuck_links": [list(k) for k in self.stuck_links],
        }


def outflow_graph(snapshot: LedgerSnapshot, gateway: str, link: CreditLink) -> FlowGraph:
    """Flow graph for moving ``link``'s balance out through the gateway.

    The victim pushes into the gateway over its own link, the gateway ripples
    into its other same-currency links that allow it, and every wallet other
    than the victim and the gateway drains into a super sink.
    """
    victim = link.creditor
    sink = "\x00sink"
    arcs = [Arc(victim, gateway, link.balance)]
    nodes = {victim, gateway, sink}
    for other in snapshot.links_by_wallet[gateway]:
        if other.key == link.key or other.currency != link.currency:
            continue
        if snapshot.no_ripple(other, gateway):
            continue
        peer = other.other(gateway)
        if peer == victim:
            continue
        cap = (other.headroom if other.bounded else UNBOUNDED) if other.debtor == gateway else other.balance
        arcs.append(Arc(gateway, peer, cap))
        arcs.append(Arc(peer, sink, UNBOUNDED))
        nodes.add(peer)
    return FlowGraph(tuple(sorted(nodes)), tuple(arcs))


def stuck_credit(snapshot: LedgerSnapshot, gateway: str, rates: RateTable, target: str = "USD") -> StuckCreditReport:
    if gateway not in snapshot.gateways:
        raise NotAGateway(f"{gateway!r} is not in the gateway registry")
    no_rippling: set[str] = set()
    no_tx: set[str] = set()
    amounts: dict[str, Decimal] = defaultdict(lambda: ZERO)
    stuck_links = []
    for l in snapshot.links_by_wallet[gateway]:
        if l.debtor != gateway or l.balance <= 0:
            continue
        w = l.creditor
        if snapshot.no_ripple(l, gateway):
            no_rippling.add(w)
        else:
            graph = outflow_graph(snapshot, gateway, l)
            if max_flow(graph, w, "\x00sink") >= l.balance:
                continue
            no_tx.add(w)
        amounts[w] += rates.convert(l.balance, l.currency, target)
        stuck_links.append(l.key)
    no_tx -= no_rippling
    return StuckCreditReport(
        gateway,
        target,
        tuple(sorted(no_rippling)),
        tuple(sorted(no_tx)),
        sum(amounts.values(), ZERO),
        dict(sorted(amounts.items())),
        tuple(sorted(stuck_links)),
    )


# credit acquisition ------------------------------------------------------------------


INBOUND = "inbound"
CIRCULAR = "circular"


@dataclass(frozen=True)
class AcquisitionEvent:
    tx_id: str
    timestamp: datetime
    victim: str
    kind: str
    received: dict[str, Decimal]
    received_value: Decimal
    paid_amount: Decimal | None = None
    paid_currency: str | None = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class AcquisitionReport:
    gateway: str
    target: str
    window: tuple[datetime, datetime]
    counts: dict[str, int]
    received_value: dict[str, Decimal]
    received_by_currency: dict[str, dict[str, Decimal]]
    paid_by_currency: dict[str, Decimal]
    # (paid currency, received currency) -> rate
    simple_rate: dict[str, Decimal]
    weighted_rate: dict[str, Decimal]
    events: tuple[AcquisitionEvent, ...]

    def as_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "events"}
        out["window"] = list(self.window)
        out["events"] = [e.as_dict() for e in self.events]
        return out


def credit_acquisition(
    txlog: Iterable[Transaction],
    victims: Iterable[str],
    gateway: str,
    rates: RateTable,
    window: tuple[datetime, datetime],
    target: str = "USD",
) -> AcquisitionReport:
    """Split credit gains of ``victims`` on their ``gateway`` links into
    inbound payments and circular purchases within ``[start, end)``."""
    start, end = window
    if end <= start:
        raise EmptyWindow(f"window [{start.isoformat()}, {end.isoformat()}) is empty")
    victims = set(victims)
    in_window = [tx for tx in txlog if start <= tx.timestamp < end]
    if not in_window:
        raise EmptyWindow("no transactions fall inside the window")
    events = []
    for tx in sorted(in_window, key=lambda t: (t.timestamp, t.id)):
        received: dict[tuple[str, str], Decimal] = defaultdict(lambda: ZERO)
        for h in tx.hops:
            if h.kind == LINK_INCREASE and h.source == gateway and h.target in victims:
                received[(h.target, h.currency)] += h.amount
        by_victim: dict[str, dict[str, Decimal]] = defaultdict(dict)
        for (v, c), amt in sorted(received.items()):
            by_victim[v][c] = amt
        for v, got in by_victim.items():
            value = sum((rates.convert(a, c, target) for c, a in got.items()), ZERO)
            if tx.circular and tx.sender == v:
                events.append(
                    AcquisitionEvent(tx.id, tx.timestamp, v, CIRCULAR, got, value, tx.source_amount, tx.source_currency)
                )
            else:
                events.append(AcquisitionEvent(tx.id, tx.timestamp, v, INBOUND, got, value))
    counts = {INBOUND: 0, CIRCULAR: 0}
    values = {INBOUND: ZERO, CIRCULAR: ZERO}
    by_cur: dict[str, dict[str, Decimal]] = {INBOUND: defaultdict(lambda: ZERO), CIRCULAR: defaultdict(lambda: ZERO)}
    paid: dict[str, Decimal] = defaultdict(lambda: ZERO)
    rate_sum: dict[str, Decimal] = defaultdict(lambda: ZERO)
    rate_n: dict[str, int] = defaultdict(int)
    vol_in: dict[str, Decimal] = defaultdict(lambda: ZERO)
    vol_out: dict[str, Decimal] = defaultdict(lambda: ZERO)
    for e in events:
        counts[e.kind] += 1
        values[e.kind] += e.received_value
        for c, a in e.received.items():
            by_cur[e.kind][c] += a
        if e.kind == CIRCULAR and e.paid_amount:
            paid[e.paid_currency] += e.paid_amount
            for c, a in e.received.items():
                key = f"{c}/{e.paid_currency}"
                rate_sum[key] += a / e.paid_amount
                rate_n[key] += 1
                vol_in[key] += a
                vol_out[key] += e.paid_amount
    return AcquisitionReport(
        gateway=gateway,
        target=target,
        window=(start, end),
        counts=counts,
        received_value=values,
        received_by_currency={k: dict(sorted(v.items())) for k, v in by_cur.items()},
        paid_by_currency=dict(sorted(paid.items())),
        simple_rate={k: rate_sum[k] / rate_n[k] for k in sorted(rate_sum)},
        weighted_rate={k: vol_in[k] / vol_out[k] for k in sorted(vol_in)},
        events=tuple(events),
    )
