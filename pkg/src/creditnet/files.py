"""Readers and writers for the line-delimited record files and CSV tables.

Every JSON-lines file holds one object per line; blank lines are skipped and
malformed lines raise :class:`~creditnet.errors.ParseError` with the line
number.  Amounts are written as decimal strings so they round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from datetime import datetime
from decimal import Decimal
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import CreditNetError, ParseError
from .ledger import (
    EPOCH,
    CreditLink,
    ExchangeOffer,
    LedgerSnapshot,
    Wallet,
    format_amount,
    format_time,
    parse_time,
    to_amount,
)
from .rates import RateSeries, RateTable
from .settlement import PathHop, Transaction, TxIntent

SNAPSHOT_KINDS = ("wallet", "link", "offer", "meta")


def _records(path) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line, parse_float=Decimal)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed record: {exc.msg}", lineno, str(path)) from None
            if not isinstance(rec, dict):
                raise ParseError("record is not an object", lineno, str(path))
            yield lineno, rec


class _Fields:
    """Field access that reports the offending line."""

    def __init__(self, rec: dict, lineno: int, path: str):
        self.rec, self.lineno, self.path = rec, lineno, path

    def fail(self, msg: str):
        raise ParseError(msg, self.lineno, self.path)

    def get(self, name: str, default: Any = ...):
        if name in self.rec:
            return self.rec[name]
        if default is ...:
            self.fail(f"missing field {name!r}")
        return default

    def text(self, name: str, default: Any = ...) -> str:
        value = self.get(name, default)
        if value is default and default is not ...:
            return value
        if not isinstance(value, str) or not value:
            self.fail(f"field {name!r} must be a non-empty string")
        return value

    def amount(self, name: str, default: Any = ..., allow_unbounded: bool = False) -> Decimal:
        value = self.get(name, default)
        if value is default and default is not ...:
            return value
        try:
            return to_amount(value, allow_unbounded=allow_unbounded)
        except CreditNetError as exc:
            self.fail(f"field {name!r}: {exc}")

    def flag(self, name: str, default: Any = ...) -> bool | None:
        value = self.get(name, default)
        if value is None or isinstance(value, bool):
            return value
        self.fail(f"field {name!r} must be a boolean")

    def time(self, name: str, default: Any = ...) -> datetime:
        value = self.get(name, default)
        if isinstance(value, datetime):
            return value
        try:
            return parse_time(value)
        except (TypeError, ValueError):
            self.fail(f"field {name!r}: bad timestamp {value!r}")

    def integer(self, name: str, default: Any = ...) -> int:
        value = self.get(name, default)
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(f"field {name!r} must be an integer")
        return value


def _offer_from(f: _Fields) -> ExchangeOffer:
    return ExchangeOffer(
        id=f.text("id"),
        owner=f.text("owner"),
        gives_currency=f.text("gives_currency"),
        gives_amount=f.amount("gives_amount"),
        takes_currency=f.text("takes_currency"),
        takes_amount=f.amount("takes_amount"),
        created_at=f.time("created_at", EPOCH),
    )


def _offer_record(o: ExchangeOffer) -> dict:
    return {
        "kind": "offer",
        "id": o.id,
        "owner": o.owner,
        "gives_currency": o.gives_currency,
        "gives_amount": format_amount(o.gives_amount),
        "takes_currency": o.takes_currency,
        "takes_amount": format_amount(o.takes_amount),
        "created_at": format_time(o.created_at),
    }


# snapshots -----------------------------------------------------------------


def load_snapshot(path, gateways: Iterable[str] = ()) -> LedgerSnapshot:
    wallets: dict[str, Wallet] = {}
    links: list[CreditLink] = []
    offers: list[ExchangeOffer] = []
    timestamp = EPOCH
    spath = str(path)
    for lineno, rec in _records(path):
        f = _Fields(rec, lineno, spath)
        kind = rec.get("kind")
        if kind == "wallet":
            wid = f.text("id")
            if wid in wallets:
                f.fail(f"duplicate wallet {wid!r}")
            wallets[wid] = Wallet(
                id=wid,
                xrp_balance=f.amount("xrp", Decimal(0)),
                default_ripple=bool(f.flag("default_ripple", False)),
            )
        elif kind == "link":
            links.append(
                CreditLink(
                    debtor=f.text("debtor"),
                    creditor=f.text("creditor"),
                    currency=f.text("currency"),
                    balance=f.amount("balance"),
                    limit=f.amount("limit", allow_unbounded=True),
                    no_ripple_debtor=f.flag("nr_debtor", None),
                    no_ripple_creditor=f.flag("nr_creditor", None),
                )
            )
        elif kind == "offer":
            offers.append(_offer_from(f))
        elif kind == "meta":
            timestamp = f.time("timestamp")
        else:
            f.fail(f"unknown record kind {kind!r}")
    return LedgerSnapshot(wallets, tuple(links), tuple(offers), frozenset(gateways), timestamp)


def snapshot_lines(snapshot: LedgerSnapshot) -> Iterator[dict]:
    yield {"kind": "meta", "timestamp": format_time(snapshot.timestamp)}
    for w in snapshot.wallets.values():
        yield {
            "kind": "wallet",
            "id": w.id,
            "xrp": format_amount(w.xrp_balance),
            "default_ripple": w.default_ripple,
        }
    for l in snapshot.links:
        rec = {
            "kind": "link",
            "debtor": l.debtor,
            "creditor": l.creditor,
            "currency": l.currency,
            "balance": format_amount(l.balance),
            "limit": format_amount(l.limit),
        }
        if l.no_ripple_debtor is not None:
            rec["nr_debtor"] = l.no_ripple_debtor
        if l.no_ripple_creditor is not None:
            rec["nr_creditor"] = l.no_ripple_creditor
        yield rec
    for o in snapshot.offers:
        yield _offer_record(o)


def _write_lines(path, records: Iterable[dict]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def save_snapshot(snapshot: LedgerSnapshot, path) -> None:
    _write_lines(path, snapshot_lines(snapshot))


def load_registry(path) -> frozenset[str]:
    ids = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            ids.add(line)
    return frozenset(ids)


def save_registry(ids: Iterable[str], path) -> None:
    Path(path).write_text("".join(f"{i}\n" for i in sorted(ids)), encoding="utf-8")


# transactions ----------------------------------------------------------------


def _hop_from(raw: dict, f: _Fields) -> PathHop:
    if not isinstance(raw, dict):
        f.fail("hop must be an object")
    h = _Fields(raw, f.lineno, f.path)
    kind = h.text("kind")
    if kind == "offer_consume":
        return PathHop(
            kind,
            h.text("source"),
            h.text("target"),
            h.amount("amount"),
            h.text("currency"),
            offer=h.text("offer", None),
            paid_amount=h.amount("paid_amount"),
            paid_currency=h.text("paid_currency"),
        )
    if kind not in ("link_increase", "link_decrease", "xrp_transfer"):
        h.fail(f"unknown hop kind {kind!r}")
    return PathHop(kind, h.text("source"), h.text("target"), h.amount("amount"), h.text("currency"))


def load_txlog(path) -> list[Transaction]:
    txs = []
    for lineno, rec in _records(path):
        f = _Fields(rec, lineno, str(path))
        currency = f.text("currency")
        amount = f.amount("amount")
        if amount <= 0:
            f.fail("amount must be positive")
        source_currency = f.text("source_currency", currency)
        intent = TxIntent(
            sender=f.text("sender"),
            receiver=f.text("receiver"),
            deliver_amount=amount,
            deliver_currency=currency,
            source_currency=source_currency,
        )
        hops = tuple(_hop_from(h, f) for h in f.get("hops", []))
        inter = f.get("intermediaries", None)
        txs.append(
            Transaction(
                id=f.text("id"),
                timestamp=f.time("timestamp"),
                intent=intent,
                hops=hops,
                source_amount=f.amount("source_amount", amount if source_currency == currency else ...),
                source_currency=source_currency,
                intermediaries=-1 if inter is None else f.integer("intermediaries"),
            )
        )
    return txs


def save_txlog(txs: Iterable[Transaction], path) -> None:
    _write_lines(path, (tx.to_record() for tx in txs))


def load_intents(path) -> list[tuple[TxIntent, datetime | None]]:
    """Intent file: ``{sender, receiver, amount, currency, source_currency?,
    max_source?, max_hops?, timestamp?}`` per line."""
    out = []
    for lineno, rec in _records(path):
        f = _Fields(rec, lineno, str(path))
        try:
            intent = TxIntent(
                sender=f.text("sender"),
                receiver=f.text("receiver"),
                deliver_amount=f.amount("amount"),
                deliver_currency=f.text("currency"),
                max_source_amount=f.amount("max_source", None),
                source_currency=f.text("source_currency", None),
                max_hops=f.integer("max_hops", 6),
            )
        except CreditNetError as exc:
            if isinstance(exc, ParseError):
                raise
            f.fail(str(exc))
        ts = f.time("timestamp", None) if "timestamp" in rec else None
        out.append((intent, ts))
    return out


@dataclass(frozen=True)
class OfferObservation:
    observed_at: datetime
    offer: ExchangeOffer


def load_offer_history(path) -> list[OfferObservation]:
    """Offer records (snapshot ``offer`` shape) plus an ``observed_at`` stamp,
    which defaults to ``created_at``."""
    out = []
    for lineno, rec in _records(path):
        f = _Fields(rec, lineno, str(path))
        if rec.get("kind", "offer") != "offer":
            f.fail(f"unknown record kind {rec.get('kind')!r}")
        offer = _offer_from(f)
        try:
            offer.validate()
        except CreditNetError as exc:
            f.fail(str(exc))
        out.append(OfferObservation(f.time("observed_at", offer.created_at), offer))
    return out


def save_offer_history(observations: Iterable[OfferObservation], path) -> None:
    def recs():
        for obs in observations:
            rec = _offer_record(obs.offer)
            rec["observed_at"] = format_time(obs.observed_at)
            yield rec

    _write_lines(path, recs())


# rates -------------------------------------------------------------------------


def _csv_rows(path, columns: tuple[str, ...]) -> Iterator[tuple[int, dict]]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(f"missing columns {missing}", 1, str(path))
        for i, row in enumerate(reader, 2):
            yield i, row


def load_rate_table(path) -> RateTable:
    """CSV ``base,quote,rate,timestamp``."""
    rates = {}
    latest = EPOCH
    for lineno, row in _csv_rows(path, ("base", "quote", "rate")):
        try:
            rate = Decimal(row["rate"])
            ts = parse_time(row["timestamp"]) if row.get("timestamp") else EPOCH
        except Exception:
            raise ParseError(f"bad rate row {row}", lineno, str(path)) from None
        rates[(row["base"].strip(), row["quote"].strip())] = rate
        latest = max(latest, ts)
    return RateTable(rates, latest)


def save_rate_table(table: RateTable, path) -> None:
    rows = [(b, q, str(r), format_time(table.timestamp)) for (b, q), r in sorted(table.rates.items())]
    write_csv(path, ("base", "quote", "rate", "timestamp"), rows)


def load_rate_series(path) -> RateSeries:
    """CSV ``timestamp,base,quote,rate``."""
    series = RateSeries()
    for lineno, row in _csv_rows(path, ("timestamp", "base", "quote", "rate")):
        try:
            series.add(parse_time(row["timestamp"]), row["base"].strip(), row["quote"].strip(), Decimal(row["rate"]))
        except CreditNetError:
            raise
        except Exception:
            raise ParseError(f"bad rate row {row}", lineno, str(path)) from None
    return series


def save_rate_series(series: RateSeries, path) -> None:
    rows = []
    for (b, q), samples in sorted(series.samples.items()):
        rows.extend((format_time(ts), b, q, str(r)) for ts, r in samples)
    rows.sort()
    write_csv(path, ("timestamp", "base", "quote", "rate"), rows)


# reports ----------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, Decimal):
        return format_amount(obj) if obj.is_finite() else "inf"
    if isinstance(obj, float):
        return None if math.isnan(obj) else ("inf" if math.isinf(obj) else obj)
    if isinstance(obj, datetime):
        return format_time(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return [_jsonable(v) for v in sorted(obj)]
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_json(obj), encoding="utf-8")


def dumps_csv(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Decimal):
        return format_amount(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, datetime):
        return format_time(v)
    return v


def write_csv(path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    Path(path).write_text(dumps_csv(header, rows), encoding="utf-8")
