"""Path-based settlement over a :class:`~creditnet.ledger.LedgerSnapshot`.

Moving value from ``u`` to ``v`` over a link either raises the link's balance
(``u`` is the debtor and owes more) or lowers it (``v`` is the debtor and owes
less).  An intermediate wallet may pass value between two of its links only
when rippling is allowed on its side of both, or when it bridges currencies by
consuming one of its own exchange offers.

XRP never travels over links.  It moves wallet-to-wallet, and only as a leg of
an offer (paid into an offer that takes XRP, or handed on by an offer that
gives XRP); standalone XRP payments are rejected.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from datetime import datetime
from decimal import ROUND_UP, Decimal
from typing import Iterable, Sequence

from .errors import (
    InsufficientCapacity,
    InsufficientXrp,
    InvalidAmount,
    LimitBreach,
    NoPath,
    NotIncident,
    SourceCapExceeded,
    UnknownWallet,
)
from .ledger import (
    QUANTUM,
    UNBOUNDED,
    XRP,
    ZERO,
    CreditLink,
    LedgerSnapshot,
    floor6,
    format_amount,
    format_time,
    quantize,
)

LINK_INCREASE = "link_increase"
LINK_DECREASE = "link_decrease"
OFFER_CONSUME = "offer_consume"
XRP_TRANSFER = "xrp_transfer"
LINK_KINDS = (LINK_INCREASE, LINK_DECREASE)

DEFAULT_MAX_HOPS = 6
DEFAULT_MAX_PATHS = 64


@dataclass(frozen=True)
class TxIntent:
    sender: str
    receiver: str
    deliver_amount: Decimal
    deliver_currency: str
    max_source_amount: Decimal | None = None
    source_currency: str | None = None
    max_hops: int = DEFAULT_MAX_HOPS

    def __post_init__(self):
        if self.deliver_amount <= 0:
            raise InvalidAmount("deliver_amount must be positive")
        if self.max_hops < 1:
            raise InvalidAmount("max_hops must be positive")
        if self.max_source_amount is not None and self.max_source_amount <= 0:
            raise InvalidAmount("max_source_amount must be positive")

    @property
    def src_currency(self) -> str:
        return self.source_currency or self.deliver_currency


@dataclass(frozen=True)
class Step:
    """One unpriced move of a candidate path."""

    kind: str
    source: str
    target: str
    currency: str  # currency leaving the step (for offers: the given currency)
    link: tuple[str, str, str] | None = None
    offer: str | None = None
    offer_rank: int = 0

    @property
    def sort_key(self) -> tuple:
        return (self.source, self.target, self.currency, self.kind, self.offer_rank, self.offer or "")


Path = tuple[Step, ...]


@dataclass(frozen=True)
class PathHop:
    """A priced move inside an executed transaction.

    For link hops value moves ``source`` -> ``target`` over the link; for
    ``offer_consume`` the owner (``source == target``) gives ``amount`` of
    ``currency`` and takes ``paid_amount`` of ``paid_currency``.
    """

    kind: str
    source: str
    target: str
    amount: Decimal
    currency: str
    offer: str | None = None
    paid_amount: Decimal | None = None
    paid_currency: str | None = None

    @property
    def link_key(self) -> tuple[str, str, str] | None:
        if self.kind == LINK_INCREASE:
            return (self.source, self.target, self.currency)
        if self.kind == LINK_DECREASE:
            return (self.target, self.source, self.currency)
        return None

    def to_record(self) -> dict:
        rec = {
            "kind": self.kind,
            "source": self.source,
            "target": self.target,
            "amount": format_amount(self.amount),
            "currency": self.currency,
        }
        if self.kind == OFFER_CONSUME:
            rec["offer"] = self.offer
            rec["paid_amount"] = format_amount(self.paid_amount)
            rec["paid_currency"] = self.paid_currency
        return rec


@dataclass(frozen=True)
class Transaction:
    id: str
    timestamp: datetime
    intent: TxIntent
    hops: tuple[PathHop, ...]
    source_amount: Decimal
    source_currency: str
    intermediaries: int = field(default=-1)

    def __post_init__(self):
        if self.intermediaries < 0:
            object.__setattr__(self, "intermediaries", len(self.intermediary_wallets))

    @property
    def sender(self) -> str:
        return self.intent.sender

    @property
    def receiver(self) -> str:
        return self.intent.receiver

    @property
    def deliver_amount(self) -> Decimal:
        return self.intent.deliver_amount

    @property
    def deliver_currency(self) -> str:
        return self.intent.deliver_currency

    @property
    def offers_used(self) -> int:
        return sum(1 for h in self.hops if h.kind == OFFER_CONSUME)

    @property
    def circular(self) -> bool:
        return self.intent.sender == self.intent.receiver

    @property
    def cross_currency(self) -> bool:
        return self.source_currency != self.intent.deliver_currency

    @property
    def intermediary_wallets(self) -> frozenset[str]:
        ends = {self.intent.sender, self.intent.receiver}
        found = set()
        for h in self.hops:
            found.update((h.source, h.target))
        return frozenset(found - ends)

    @property
    def participants(self) -> frozenset[str]:
        return self.intermediary_wallets | {self.intent.sender, self.intent.receiver}

    @property
    def involves_xrp(self) -> bool:
        if XRP in (self.source_currency, self.intent.deliver_currency):
            return True
        return any(h.currency == XRP or h.paid_currency == XRP for h in self.hops)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "timestamp": format_time(self.timestamp),
            "sender": self.intent.sender,
            "receiver": self.intent.receiver,
            "amount": format_amount(self.intent.deliver_amount),
            "currency": self.intent.deliver_currency,
            "source_amount": format_amount(self.source_amount),
            "source_currency": self.source_currency,
            "hops": [h.to_record() for h in self.hops],
            "offers_used": self.offers_used,
            "intermediaries": self.intermediaries,
        }


def transaction_id(timestamp: datetime, intent: TxIntent, hops: Sequence[PathHop]) -> str:
    payload = {
        "timestamp": format_time(timestamp),
        "sender": intent.sender,
        "receiver": intent.receiver,
        "amount": format_amount(intent.deliver_amount),
        "currency": intent.deliver_currency,
        "source_currency": intent.src_currency,
        "hops": [h.to_record() for h in hops],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:32]


# --------------------------------------------------------------------------
# rippling


def rippling_allowed(snapshot: LedgerSnapshot, wallet: str, link_a: CreditLink, link_b: CreditLink) -> bool:
    """Whether ``wallet`` may shift credit between two of its links."""
    if not (link_a.has_endpoint(wallet) and link_b.has_endpoint(wallet)):
        raise NotIncident(f"{wallet} is not an endpoint of both links")
    if link_a.currency != link_b.currency:
        return False
    return not snapshot.no_ripple(link_a, wallet) and not snapshot.no_ripple(link_b, wallet)


# --------------------------------------------------------------------------
# path search


def _offer_ranking(snapshot: LedgerSnapshot) -> dict[str, int]:
    """Best rate first, ties by oldest, per (owner, takes, gives)."""
    groups: dict[tuple, list] = {}
    for o in snapshot.offers:
        groups.setdefault((o.owner, o.takes_currency, o.gives_currency), []).append(o)
    rank = {}
    for offers in groups.values():
        offers.sort(key=lambda o: (-o.rate, o.created_at, o.id))
        for i, o in enumerate(offers):
            rank[o.id] = i
    return rank


def _distances(snapshot: LedgerSnapshot, target: str) -> dict[str, int]:
    dist = {target: 0}
    frontier = [target]
    while frontier:
        nxt = []
        for u in frontier:
            for v in snapshot.adjacency[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


def _search(
    snapshot: LedgerSnapshot,
    sender: str,
    receiver: str,
    src_currency: str,
    dst_currency: str,
    max_hops: int,
    max_paths: int | None,
    accept=None,
) -> list[Path]:
    for w in (sender, receiver):
        if w not in snapshot.wallets:
            raise UnknownWallet(f"unknown wallet {w!r}")
    ranks = _offer_ranking(snapshot)
    xrp_offers_by_taker = sorted({o.owner for o in snapshot.offers if o.takes_currency == XRP})
    xrp_possible = XRP in (src_currency, dst_currency) or any(
        XRP in (o.gives_currency, o.takes_currency) for o in snapshot.offers
    )
    dist = None if xrp_possible else _distances(snapshot, receiver)
    link_index = snapshot.link_index

    def offer_steps(u, currency):
        out = []
        for o in snapshot.offers_by_owner.get(u, ()):
            if o.takes_currency != currency:
                continue
            if o.gives_currency == XRP and snapshot.wallets[u].xrp_balance <= 0:
                continue
            out.append(Step(OFFER_CONSUME, u, u, o.gives_currency, offer=o.id, offer_rank=ranks[o.id]))
        return out

    # state: (steps, wallet, currency, visited, used_links, has_offer)
    level = [((), sender, src_currency, frozenset([sender]), frozenset(), False)]
    found: list[tuple[int, tuple, Path]] = []
    for hops in range(0, max_hops + 1):
        nxt = []
        i = 0
        while i < len(level):
            steps, u, cur, visited, used, has_offer = level[i]
            i += 1
            last = steps[-1] if steps else None
            if u == receiver and steps:
                continue  # completed paths are recorded on arrival
            # offer bridging at an intermediary
            if u not in (sender, receiver) and (last is None or last.kind != OFFER_CONSUME):
                for st in offer_steps(u, cur):
                    level.append((steps + (st,), u, st.currency, visited, used, True))
            if hops == max_hops:
                continue
            if cur == XRP:
                from_sender = u == sender and not steps
                after_offer = last is not None and last.kind == OFFER_CONSUME and last.currency == XRP
                if not (from_sender or after_offer):
                    continue
                if snapshot.wallets[u].xrp_balance <= 0 and from_sender:
                    continue
                targets = [m for m in xrp_offers_by_taker if m not in visited and m not in (sender, receiver)]
                if dst_currency == XRP and has_offer:
                    targets.append(receiver)
                for v in sorted(set(targets)):
                    if v in visited and v != receiver:
                        continue
                    st = Step(XRP_TRANSFER, u, v, XRP)
                    new = steps + (st,)
                    if v == receiver:
                        if accept is None or accept(new):
                            found.append((hops + 1, tuple(s.sort_key for s in new), new))
                        continue
                    nxt.append((new, v, XRP, visited | {v}, used, has_offer))
                continue
            for l in snapshot.links_by_wallet[u]:
                if l.currency != cur or l.key in used:
                    continue
                v = l.other(u)
                if v in visited and not (v == receiver and receiver == sender):
                    continue
                if v == receiver and cur != dst_currency:
                    continue
                if dist is not None and (v not in dist or hops + 1 + dist[v] > max_hops):
                    continue
                if u == l.debtor:
                    kind, cap = LINK_INCREASE, l.headroom
                else:
                    kind, cap = LINK_DECREASE, l.balance
                if cap <= 0:
                    continue
                if u != sender and last is not None and last.kind in LINK_KINDS:
                    if not rippling_allowed(snapshot, u, link_index[last.link], l):
                        continue
                st = Step(kind, u, v, cur, link=l.key)
                new = steps + (st,)
                if v == receiver:
                    if accept is None or accept(new):
                        found.append((hops + 1, tuple(s.sort_key for s in new), new))
                    continue
                nxt.append((new, v, cur, visited | {v}, used | {l.key}, has_offer))
        if max_paths is not None and len(found) >= max_paths:
            break
        level = nxt
        if not level:
            break
    found.sort(key=lambda t: (t[0], t[1]))
    paths = [p for _, _, p in found]
    return paths if max_paths is None else paths[:max_paths]


def find_paths(
    snapshot: LedgerSnapshot, intent: TxIntent, max_paths: int | None = DEFAULT_MAX_PATHS
) -> list[Path]:
    """Candidate paths ordered by hop count, then lexicographically by hop ids."""
    paths = _search(
        snapshot,
        intent.sender,
        intent.receiver,
        intent.src_currency,
        intent.deliver_currency,
        intent.max_hops,
        max_paths,
    )
    if not paths:
        raise NoPath(f"no path from {intent.sender} to {intent.receiver} in {intent.deliver_currency}")
    return paths


# --------------------------------------------------------------------------
# execution


class _Book:
    """Mutable working copy of the state touched by settlement."""

    def __init__(self, snapshot: LedgerSnapshot):
        self.snapshot = snapshot
        self.balance = {l.key: l.balance for l in snapshot.links}
        self.offers = {o.id: [o.gives_amount, o.takes_amount] for o in snapshot.offers}
        self.xrp = {w: wl.xrp_balance for w, wl in snapshot.wallets.items()}

    def limit(self, key):
        return self.snapshot.link_index[key].limit

    def capacity(self, step: Step) -> Decimal:
        """Input-side capacity, or output-side for offers."""
        if step.kind == LINK_INCREASE:
            return self.limit(step.link) - self.balance[step.link]
        if step.kind == LINK_DECREASE:
            return self.balance[step.link]
        if step.kind == XRP_TRANSFER:
            return self.xrp[step.source]
        gives, _ = self.offers.get(step.offer, (ZERO, ZERO))
        return gives

    def rate(self, step: Step) -> Decimal:
        gives, takes = self.offers[step.offer]
        return gives / takes

    def max_output(self, path: Path) -> Decimal:
        factor = Decimal(1)
        best = UNBOUNDED
        for st in reversed(path):
            cap = self.capacity(st)
            if cap <= 0:
                return ZERO
            best = min(best, cap * factor)
            if st.kind == OFFER_CONSUME:
                factor *= self.rate(st)
        return floor6(best)

    def price_backward(self, path: Path, out: Decimal) -> list[tuple[Decimal, Decimal | None]] | None:
        """Per-step (amount, paid) delivering ``out``; ``None`` if a cap is hit."""
        priced: list[tuple[Decimal, Decimal | None]] = []
        amt = out
        for st in reversed(path):
            if st.kind == OFFER_CONSUME:
                gives, takes = self.offers[st.offer]
                paid = quantize(amt * takes / gives, ROUND_UP)
                priced.append((amt, paid))
                amt = paid
            else:
                priced.append((amt, None))
        priced.reverse()
        return priced if self._fits(path, priced) else None

    def price_forward(self, path: Path, inp: Decimal) -> list[tuple[Decimal, Decimal | None]] | None:
        priced: list[tuple[Decimal, Decimal | None]] = []
        amt = inp
        for st in path:
            if st.kind == OFFER_CONSUME:
                gives, takes = self.offers[st.offer]
                out = floor6(amt * gives / takes)
                priced.append((out, amt))
                amt = out
            else:
                priced.append((amt, None))
        return priced if self._fits(path, priced) else None

    def _fits(self, path: Path, priced) -> bool:
        for st, (amt, paid) in zip(path, priced):
            if amt <= 0 or amt > self.capacity(st):
                return False
            if paid is not None and paid <= 0:
                return False
        return True

    def apply(self, path: Path, priced) -> list[PathHop]:
        hops = []
        for st, (amt, paid) in zip(path, priced):
            if st.kind == LINK_INCREASE:
                new = self.balance[st.link] + amt
                if new > self.limit(st.link):
                    raise LimitBreach(f"{st.link} would exceed its limit")
                self.balance[st.link] = new
                hops.append(PathHop(st.kind, st.source, st.target, amt, st.currency))
            elif st.kind == LINK_DECREASE:
                new = self.balance[st.link] - amt
                if new < 0:
                    raise LimitBreach(f"{st.link} would go negative")
                self.balance[st.link] = new
                hops.append(PathHop(st.kind, st.source, st.target, amt, st.currency))
            elif st.kind == XRP_TRANSFER:
                if self.xrp[st.source] < amt:
                    raise LimitBreach(f"{st.source} lacks XRP")
                self.xrp[st.source] -= amt
                self.xrp[st.target] += amt
                hops.append(PathHop(st.kind, st.source, st.target, amt, XRP))
            else:
                offer = self.snapshot.offer_index[st.offer]
                rem = self.offers[st.offer]
                rem[0] -= amt
                rem[1] -= paid
                hops.append(
                    PathHop(
                        OFFER_CONSUME,
                        st.source,
                        st.target,
                        amt,
                        offer.gives_currency,
                        offer=st.offer,
                        paid_amount=paid,
                        paid_currency=offer.takes_currency,
                    )
                )
        return hops

    def snapshot_after(self, timestamp: datetime | None = None) -> LedgerSnapshot:
        snap = self.snapshot
        links = [replace(l, balance=self.balance[l.key]) if self.balance[l.key] != l.balance else l for l in snap.links]
        offers = []
        for o in snap.offers:
            gives, takes = self.offers[o.id]
            if gives <= 0 or takes <= 0:
                continue
            if gives != o.gives_amount or takes != o.takes_amount:
                o = replace(o, gives_amount=gives, takes_amount=takes)
            offers.append(o)
        wallets = {
            w: replace(wl, xrp_balance=self.xrp[w]) if self.xrp[w] != wl.xrp_balance else wl
            for w, wl in snap.wallets.items()
        }
        return snap.evolve(wallets=wallets, links=links, offers=offers, timestamp=timestamp)


_ROUNDING_RETRIES = 1000


def _fill_output(book: _Book, path: Path, want: Decimal):
    out = min(want, book.max_output(path))
    for _ in range(_ROUNDING_RETRIES):
        if out <= 0:
            break
        priced = book.price_backward(path, out)
        if priced is not None:
            return priced
        out -= QUANTUM  # rounding on an offer leg overshot a cap
    return None


def _fill_input(book: _Book, path: Path, budget: Decimal):
    top = _fill_output(book, path, UNBOUNDED)
    if top is None:
        return None
    inp = min(budget, _source_spent(path, top))
    for _ in range(_ROUNDING_RETRIES):
        if inp <= 0:
            break
        priced = book.price_forward(path, inp)
        if priced is not None:
            return priced
        inp -= QUANTUM
    return None


def _source_spent(path: Path, priced) -> Decimal:
    first, (amt, paid) = path[0], priced[0]
    return paid if first.kind == OFFER_CONSUME else amt


def execute_transaction(
    snapshot: LedgerSnapshot,
    intent: TxIntent,
    *,
    timestamp: datetime | None = None,
    max_paths: int | None = DEFAULT_MAX_PATHS,
) -> tuple[LedgerSnapshot, Transaction]:
    """Settle ``intent`` by greedily filling candidate paths in order.

    Returns the new snapshot and the executed transaction; ``snapshot`` is
    left untouched.
    """
    paths = find_paths(snapshot, intent, max_paths)
    book = _Book(snapshot)
    remaining = intent.deliver_amount
    hops: list[PathHop] = []
    spent = ZERO
    for path in paths:
        if remaining <= 0:
            break
        priced = _fill_output(book, path, remaining)
        if priced is None:
            continue
        hops.extend(book.apply(path, priced))
        remaining -= priced[-1][0]
        spent += _source_spent(path, priced)
    if remaining > 0:
        raise InsufficientCapacity(
            f"paths from {intent.sender} to {intent.receiver} carry only "
            f"{format_amount(intent.deliver_amount - remaining)} of {format_amount(intent.deliver_amount)}"
        )
    if intent.max_source_amount is not None and spent > intent.max_source_amount:
        raise SourceCapExceeded(
            f"needs {format_amount(spent)} {intent.src_currency}, cap {format_amount(intent.max_source_amount)}"
        )
    ts = timestamp or snapshot.timestamp
    tx = Transaction(
        id=transaction_id(ts, intent, hops),
        timestamp=ts,
        intent=intent,
        hops=tuple(hops),
        source_amount=spent,
        source_currency=intent.src_currency,
    )
    return book.snapshot_after(ts), tx


def execute_along(
    snapshot: LedgerSnapshot,
    path: Path,
    deliver_amount: Decimal,
    *,
    timestamp: datetime | None = None,
) -> tuple[LedgerSnapshot, Transaction]:
    """Settle exactly ``deliver_amount`` over one given path."""
    book = _Book(snapshot)
    priced = book.price_backward(path, deliver_amount)
    if priced is None:
        raise InsufficientCapacity("path cannot carry the requested amount")
    hops = book.apply(path, priced)
    sender, receiver = path[0].source, path[-1].target
    src_cur = XRP if path[0].kind == XRP_TRANSFER else (
        snapshot.offer_index[path[0].offer].takes_currency if path[0].kind == OFFER_CONSUME else path[0].currency
    )
    intent = TxIntent(sender, receiver, deliver_amount, path[-1].currency, source_currency=src_cur, max_hops=len(path))
    ts = timestamp or snapshot.timestamp
    tx = Transaction(
        id=transaction_id(ts, intent, hops),
        timestamp=ts,
        intent=intent,
        hops=tuple(hops),
        source_amount=_source_spent(path, priced),
        source_currency=src_cur,
    )
    return book.snapshot_after(ts), tx


def reverse_path(path: Path) -> Path:
    """The same links walked backwards; only defined for single-currency link paths."""
    flip = {LINK_INCREASE: LINK_DECREASE, LINK_DECREASE: LINK_INCREASE}
    out = []
    for st in reversed(path):
        if st.kind not in flip:
            raise ValueError("only link paths can be reversed")
        out.append(replace(st, kind=flip[st.kind], source=st.target, target=st.source))
    return tuple(out)


def execute_circular_xrp(
    snapshot: LedgerSnapshot,
    wallet: str,
    pay_xrp: Decimal,
    target_currency: str,
    target_issuer: str,
    *,
    max_hops: int = DEFAULT_MAX_HOPS,
    timestamp: datetime | None = None,
) -> tuple[LedgerSnapshot, Transaction]:
    """Spend up to ``pay_xrp`` through XRP offers to raise ``wallet``'s credit
    issued by ``target_issuer`` in ``target_currency``."""
    if pay_xrp <= 0:
        raise InvalidAmount("pay_xrp must be positive")
    if wallet not in snapshot.wallets or target_issuer not in snapshot.wallets:
        raise UnknownWallet(f"unknown wallet {wallet!r} or {target_issuer!r}")
    if snapshot.wallets[wallet].xrp_balance < pay_xrp:
        raise InsufficientXrp(f"{wallet} holds {format_amount(snapshot.wallets[wallet].xrp_balance)} XRP")

    def ends_at_issuer(path: Path) -> bool:
        last = path[-1]
        return last.kind == LINK_INCREASE and last.source == target_issuer

    paths = _search(
        snapshot, wallet, wallet, XRP, target_currency, max_hops, DEFAULT_MAX_PATHS, accept=ends_at_issuer
    )
    if not paths:
        raise NoPath(f"no XRP offer chain from {wallet} to {target_currency} issued by {target_issuer}")
    book = _Book(snapshot)
    budget = pay_xrp
    delivered = ZERO
    hops: list[PathHop] = []
    for path in paths:
        if budget <= 0:
            break
        priced = _fill_input(book, path, budget)
        if priced is None:
            continue
        hops.extend(book.apply(path, priced))
        budget -= _source_spent(path, priced)
        delivered += priced[-1][0]
    if delivered <= 0:
        raise NoPath("offer chain has no remaining depth")
    intent = TxIntent(
        wallet, wallet, delivered, target_currency, max_source_amount=pay_xrp, source_currency=XRP, max_hops=max_hops
    )
    ts = timestamp or snapshot.timestamp
    tx = Transaction(
        id=transaction_id(ts, intent, hops),
        timestamp=ts,
        intent=intent,
        hops=tuple(hops),
        source_amount=pay_xrp - budget,
        source_currency=XRP,
    )
    return book.snapshot_after(ts), tx


def replay(snapshot: LedgerSnapshot, intents: Iterable[TxIntent], **kwargs) -> tuple[LedgerSnapshot, list[Transaction]]:
    txs = []
    for intent in intents:
        snapshot, tx = execute_transaction(snapshot, intent, **kwargs)
        txs.append(tx)
    return snapshot, txs
