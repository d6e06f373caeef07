"""Transaction-log classification and stale-offer detection against
reference exchange rates."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from decimal import Decimal
from typing import Callable, Iterable, Sequence

from .errors import EmptyWindow, NotCrossCurrency
from .files import OfferObservation
from .ledger import XRP, ZERO, LedgerSnapshot
from .rates import RateSeries
from .settlement import OFFER_CONSUME, Transaction


def no_anomaly(tx: Transaction) -> bool:
    return False


# classification ------------------------------------------------------------------


@dataclass(frozen=True)
class ClassificationReport:
    total: int
    circular: int
    cross_currency: int
    cross_currency_noncircular: int
    offers_used: int
    offers_consumed: int
    intermediaries_0: int
    intermediaries_1: int
    intermediaries_2plus: int
    involving_xrp: int
    not_involving_xrp: int
    pruned_anomalous: int = 0
    pruned_absent_endpoints: int = 0
    pruned_direct_xrp: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def is_direct_xrp(tx: Transaction) -> bool:
    return tx.source_currency == XRP and tx.deliver_currency == XRP and tx.offers_used == 0


def classify_transactions(
    txlog: Iterable[Transaction],
    snapshot: LedgerSnapshot,
    is_anomalous: Callable[[Transaction], bool] = no_anomaly,
) -> ClassificationReport:
    c: dict[str, int] = defaultdict(int)
    for tx in txlog:
        if is_anomalous(tx):
            c["pruned_anomalous"] += 1
            continue
        if tx.sender not in snapshot.wallets or tx.receiver not in snapshot.wallets:
            c["pruned_absent_endpoints"] += 1
            continue
        if is_direct_xrp(tx):
            c["pruned_direct_xrp"] += 1
            continue
        c["total"] += 1
        if tx.circular:
            c["circular"] += 1
        if tx.cross_currency:
            c["cross_currency"] += 1
            if not tx.circular:
                c["cross_currency_noncircular"] += 1
        if tx.offers_used:
            c["offers_used"] += 1
            c["offers_consumed"] += tx.offers_used
        n = tx.intermediaries
        c["intermediaries_0" if n == 0 else "intermediaries_1" if n == 1 else "intermediaries_2plus"] += 1
        c["involving_xrp" if tx.involves_xrp else "not_involving_xrp"] += 1
    return ClassificationReport(**{f: c[f] for f in ClassificationReport.__dataclass_fields__})


# gains ----------------------------------------------------------------------------


def exchange_gain(
    paid: Decimal,
    paid_currency: str,
    received: Decimal,
    received_currency: str,
    rates: RateSeries,
    at: datetime,
    reference: str = "USD",
) -> Decimal:
    """Reference value received minus reference value paid, from the taker's side."""
    return rates.value(received, received_currency, reference, at) - rates.value(paid, paid_currency, reference, at)


def stale_gain(tx: Transaction, rates: RateSeries, reference: str = "USD") -> Decimal:
    """Positive when the taker came out ahead of the reference market."""
    if not tx.cross_currency:
        raise NotCrossCurrency(f"transaction {tx.id} does not exchange currencies")
    return exchange_gain(
        tx.source_amount, tx.source_currency, tx.deliver_amount, tx.deliver_currency, rates, tx.timestamp, reference
    )


def offer_gains(tx: Transaction, rates: RateSeries, reference: str = "USD") -> dict[str, Decimal]:
    """Per-offer taker gain for every offer the transaction consumed."""
    out: dict[str, Decimal] = defaultdict(lambda: ZERO)
    for h in tx.hops:
        if h.kind == OFFER_CONSUME:
            out[h.offer] += exchange_gain(h.paid_amount, h.paid_currency, h.amount, h.currency, rates, tx.timestamp, reference)
    return dict(out)


# stale offers ----------------------------------------------------------------------


RATE_POINT_COLUMNS = ("timestamp", "tx_rate", "reference_rate", "side")


@dataclass(frozen=True)
class ExploitRecord:
    wallet: str
    gain: Decimal
    n_transactions: int
    offers: tuple[str, ...]


@dataclass(frozen=True)
class RatePoint:
    timestamp: datetime
    tx_id: str
    tx_rate: Decimal
    reference_rate: Decimal
    side: str
    gain: Decimal

    def row(self) -> tuple:
        return (self.timestamp, self.tx_rate, self.reference_rate, self.side)


@dataclass(frozen=True)
class StaleOfferReport:
    window: tuple[datetime, datetime]
    pair: tuple[str, str]
    reference: str
    at_risk_total: Decimal
    per_offer_at_risk: dict[str, Decimal]
    exploit_records: tuple[ExploitRecord, ...]
    points: tuple[RatePoint, ...]
    per_offer_gain: dict[str, Decimal] = field(default_factory=dict)

    @property
    def realized_gain(self) -> Decimal:
        return sum((r.gain for r in self.exploit_records), ZERO)

    def as_dict(self) -> dict:
        return {
            "window": list(self.window),
            "pair": list(self.pair),
            "reference": self.reference,
            "at_risk_total": self.at_risk_total,
            "realized_gain": self.realized_gain,
            "per_offer_at_risk": self.per_offer_at_risk,
            "per_offer_gain": self.per_offer_gain,
            "exploit_records": [r.__dict__ for r in self.exploit_records],
            "points": [p.__dict__ for p in self.points],
        }


def reference_rate(rates: RateSeries, a: str, b: str, reference: str, at: datetime) -> Decimal:
    """Units of ``b`` worth one unit of ``a``, crossed through the reference
    currency so points agree with the gains computed alongside them."""
    return rates.value(Decimal(1), a, reference, at) / rates.value(Decimal(1), b, reference, at)


def _observation_for(obs: Sequence[OfferObservation], first_fill: datetime | None) -> OfferObservation:
    """State of an offer just before it was first exploited in the window."""
    if first_fill is not None:
        before = [o for o in obs if o.observed_at <= first_fill]
        if before:
            return before[-1]
        return obs[0]
    return obs[-1]


def stale_offer_report(
    txlog: Iterable[Transaction],
    offer_history: Iterable[OfferObservation],
    rates: RateSeries,
    pair: tuple[str, str],
    window: tuple[datetime, datetime],
    reference: str = "USD",
) -> StaleOfferReport:
    start, end = window
    if end <= start:
        raise EmptyWindow(f"window [{start.isoformat()}, {end.isoformat()}) is empty")
    a, b = pair
    if a == b:
        raise ValueError("pair needs two distinct currencies")
    wanted = {a, b}
    txs = sorted(
        (
            tx
            for tx in txlog
            if start <= tx.timestamp < end and tx.cross_currency and {tx.source_currency, tx.deliver_currency} == wanted
        ),
        key=lambda t: (t.timestamp, t.id),
    )
    points = []
    by_taker: dict[str, list] = defaultdict(lambda: [ZERO, 0, set()])
    per_offer_gain: dict[str, Decimal] = defaultdict(lambda: ZERO)
    first_fill: dict[str, datetime] = {}
    for tx in txs:
        gain = stale_gain(tx, rates, reference)
        amount_a = tx.source_amount if tx.source_currency == a else tx.deliver_amount
        amount_b = tx.deliver_amount if tx.deliver_currency == b else tx.source_amount
        points.append(
            RatePoint(
                tx.timestamp,
                tx.id,
                amount_b / amount_a,
                reference_rate(rates, a, b, reference, tx.timestamp),
                f"{tx.source_currency}->{tx.deliver_currency}",
                gain,
            )
        )
        offers = offer_gains(tx, rates, reference)
        for oid, g in offers.items():
            per_offer_gain[oid] += g
            first_fill.setdefault(oid, tx.timestamp)
        if gain > 0:
            rec = by_taker[tx.sender]
            rec[0] += gain
            rec[1] += 1
            rec[2].update(offers)

    history: dict[str, list[OfferObservation]] = defaultdict(list)
    for o in offer_history:
        if start <= o.observed_at < end and {o.offer.gives_currency, o.offer.takes_currency} == wanted:
            history[o.offer.id].append(o)
    at_risk = {}
    for oid, obs in sorted(history.items()):
        obs.sort(key=lambda o: o.observed_at)
        o = _observation_for(obs, first_fill.get(oid))
        gap = rates.value(o.offer.gives_amount, o.offer.gives_currency, reference, o.observed_at) - rates.value(
            o.offer.takes_amount, o.offer.takes_currency, reference, o.observed_at
        )
        at_risk[oid] = max(ZERO, gap)

    records = tuple(
        ExploitRecord(w, g, n, tuple(sorted(offs))) for w, (g, n, offs) in sorted(by_taker.items())
    )
    return StaleOfferReport(
        window=(start, end),
        pair=(a, b),
        reference=reference,
        at_risk_total=sum(at_risk.values(), ZERO),
        per_offer_at_risk=at_risk,
        exploit_records=records,
        points=tuple(points),
        per_offer_gain=dict(sorted(per_offer_gain.items())),
    )
