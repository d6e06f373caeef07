"""Credit-network data model.

A :class:`LedgerSnapshot` is an immutable multigraph of wallets joined by
per-currency IOU links.  Every mutation (settlement, pruning, conversion)
produces a fresh snapshot; construction validates all invariants.

Amounts are :class:`~decimal.Decimal` quantized to six fractional digits.
An unbounded credit limit is ``Decimal("Infinity")`` (:data:`UNBOUNDED`) so
capacity arithmetic stays symbolic: ``UNBOUNDED - x`` is still unbounded.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from decimal import ROUND_DOWN, ROUND_HALF_EVEN, Decimal, InvalidOperation
from functools import cached_property
from typing import Iterable, Mapping

from .errors import EmptySnapshot, InvalidAmount, InvariantViolation, NotIncident

UNBOUNDED = Decimal("Infinity")
XRP = "XRP"
ZERO = Decimal(0)
QUANTUM = Decimal("0.000001")
EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

USER, GATEWAY, MARKET_MAKER = "user", "gateway", "market_maker"

_WALLET_ID = re.compile(r"^[\x21-\x7e]+$")
_CURRENCY = re.compile(r"^[A-Za-z0-9?!@#$%^&*<>(){}\[\]|]{3,40}$")


def quantize(value: Decimal, rounding: str = ROUND_HALF_EVEN) -> Decimal:
    """Round to the ledger's six fractional digits; infinities pass through."""
    if value.is_infinite():
        return value
    return value.quantize(QUANTUM, rounding=rounding)


def floor6(value: Decimal) -> Decimal:
    return quantize(value, ROUND_DOWN)


def to_amount(value, *, allow_unbounded: bool = False) -> Decimal:
    """Coerce a JSON/CSV scalar to a ledger amount."""
    if isinstance(value, bool):
        raise InvalidAmount(f"not an amount: {value!r}")
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity", "unbounded"):
        if allow_unbounded:
            return UNBOUNDED
        raise InvalidAmount("unbounded value not allowed here")
    try:
        # str() first so that floats go through their shortest repr
        amount = value if isinstance(value, Decimal) else Decimal(str(value))
    except (InvalidOperation, ValueError) as exc:
        raise InvalidAmount(f"not an amount: {value!r}") from exc
    if amount.is_nan():
        raise InvalidAmount("NaN amount")
    if amount.is_infinite():
        if allow_unbounded and amount > 0:
            return UNBOUNDED
        raise InvalidAmount(f"infinite amount: {value!r}")
    return quantize(amount)


def format_amount(value: Decimal) -> str:
    if value.is_infinite():
        return "inf"
    return format(quantize(value), "f")


def parse_time(value) -> datetime:
    if isinstance(value, datetime):
        ts = value
    else:
        text = str(value).strip()
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_time(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class Wallet:
    id: str
    xrp_balance: Decimal = ZERO
    default_ripple: bool = False
    role: str = USER
    tx_count: int = 0


@dataclass(frozen=True)
class CreditLink:
    """``debtor`` owes ``creditor`` ``balance`` units of ``currency``.

    ``limit`` is set by the creditor.  The two ``no_ripple_*`` flags belong to
    the respective endpoint; ``None`` means the input did not state the flag.
    """

    debtor: str
    creditor: str
    currency: str
    balance: Decimal
    limit: Decimal = UNBOUNDED
    no_ripple_debtor: bool | None = None
    no_ripple_creditor: bool | None = None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.debtor, self.creditor, self.currency)

    @property
    def bounded(self) -> bool:
        return not self.limit.is_infinite()

    @property
    def headroom(self) -> Decimal:
        """Credit the debtor can still push to the creditor."""
        return self.limit - self.balance

    def has_endpoint(self, wallet: str) -> bool:
        return wallet == self.debtor or wallet == self.creditor

    def other(self, wallet: str) -> str:
        if wallet == self.debtor:
            return self.creditor
        if wallet == self.creditor:
            return self.debtor
        raise NotIncident(f"{wallet} is not an endpoint of {self.key}")

    def side_flag(self, wallet: str) -> bool | None:
        if wallet == self.debtor:
            return self.no_ripple_debtor
        if wallet == self.creditor:
            return self.no_ripple_creditor
        raise NotIncident(f"{wallet} is not an endpoint of {self.key}")

    def with_side_flag(self, wallet: str, value: bool | None) -> CreditLink:
        if wallet == self.debtor:
            return replace(self, no_ripple_debtor=value)
        if wallet == self.creditor:
            return replace(self, no_ripple_creditor=value)
        raise NotIncident(f"{wallet} is not an endpoint of {self.key}")


@dataclass(frozen=True)
class ExchangeOffer:
    """A standing order: ``owner`` gives ``gives_amount`` of ``gives_currency``
    in exchange for ``takes_amount`` of ``takes_currency`` (remaining depth)."""

    id: str
    owner: str
    gives_currency: str
    gives_amount: Decimal
    takes_currency: str
    takes_amount: Decimal
    created_at: datetime = EPOCH

    @property
    def rate(self) -> Decimal:
        """Units given per unit taken."""
        return self.gives_amount / self.takes_amount

    def validate(self) -> None:
        if self.gives_amount <= 0 or self.takes_amount <= 0:
            raise InvariantViolation(f"offer {self.id}: amounts must be positive")
        if self.gives_currency == self.takes_currency:
            raise InvariantViolation(f"offer {self.id}: gives and takes the same currency")
        for code in (self.gives_currency, self.takes_currency):
            if not _CURRENCY.match(code):
                raise InvariantViolation(f"offer {self.id}: bad currency code {code!r}")


@dataclass(frozen=True, eq=False)
class LedgerSnapshot:
    wallets: Mapping[str, Wallet]
    links: tuple[CreditLink, ...] = ()
    offers: tuple[ExchangeOffer, ...] = ()
    gateways: frozenset[str] = frozenset()
    timestamp: datetime = EPOCH

    def __post_init__(self):
        wallets = self.wallets
        if not isinstance(wallets, Mapping):
            wallets = {w.id: w for w in wallets}
        owners = {o.owner for o in self.offers}
        gateways = frozenset(self.gateways)
        tagged = {}
        for wid in sorted(wallets):
            w = wallets[wid]
            role = GATEWAY if wid in gateways else MARKET_MAKER if wid in owners else USER
            tagged[wid] = w if w.role == role else replace(w, role=role)
        object.__setattr__(self, "wallets", tagged)
        object.__setattr__(self, "links", tuple(sorted(self.links, key=lambda l: l.key)))
        object.__setattr__(self, "offers", tuple(sorted(self.offers, key=lambda o: o.id)))
        object.__setattr__(self, "gateways", gateways)
        _validate(self)

    def __eq__(self, other):
        if not isinstance(other, LedgerSnapshot):
            return NotImplemented
        return (
            self.wallets == other.wallets
            and self.links == other.links
            and self.offers == other.offers
            and self.gateways == other.gateways
            and self.timestamp == other.timestamp
        )

    __hash__ = None

    # indexes -------------------------------------------------------------

    @cached_property
    def link_index(self) -> dict[tuple[str, str, str], CreditLink]:
        return {l.key: l for l in self.links}

    @cached_property
    def links_by_wallet(self) -> dict[str, tuple[CreditLink, ...]]:
        acc: dict[str, list[CreditLink]] = {w: [] for w in self.wallets}
        for l in self.links:
            acc[l.debtor].append(l)
            acc[l.creditor].append(l)
        return {w: tuple(ls) for w, ls in acc.items()}

    @cached_property
    def offer_index(self) -> dict[str, ExchangeOffer]:
        return {o.id: o for o in self.offers}

    @cached_property
    def offers_by_owner(self) -> dict[str, tuple[ExchangeOffer, ...]]:
        acc: dict[str, list[ExchangeOffer]] = defaultdict(list)
        for o in self.offers:
            acc[o.owner].append(o)
        return {w: tuple(os) for w, os in acc.items()}

    @cached_property
    def adjacency(self) -> dict[str, frozenset[str]]:
        """Simple undirected collapse: parallel per-currency links merged."""
        acc: dict[str, set[str]] = {w: set() for w in self.wallets}
        for l in self.links:
            acc[l.debtor].add(l.creditor)
            acc[l.creditor].add(l.debtor)
        return {w: frozenset(n) for w, n in acc.items()}

    @cached_property
    def currencies(self) -> frozenset[str]:
        return frozenset(l.currency for l in self.links)

    # helpers -------------------------------------------------------------

    def wallet(self, wid: str) -> Wallet:
        return self.wallets[wid]

    def no_ripple(self, link: CreditLink, wallet: str) -> bool:
        """Effective flag of ``wallet``'s side of ``link`` after normalization."""
        if self.wallets[wallet].default_ripple:
            return False
        flag = link.side_flag(wallet)
        return bool(flag) if flag is not None else False

    def net_position(self, wallet: str, currency: str) -> Decimal:
        """Credit owed to ``wallet`` minus credit it owes, in one currency."""
        total = ZERO
        for l in self.links_by_wallet[wallet]:
            if l.currency != currency:
                continue
            total += l.balance if l.creditor == wallet else -l.balance
        return total

    def evolve(
        self,
        *,
        wallets: Mapping[str, Wallet] | Iterable[Wallet] | None = None,
        links: Iterable[CreditLink] | None = None,
        offers: Iterable[ExchangeOffer] | None = None,
        gateways: Iterable[str] | None = None,
        timestamp: datetime | None = None,
    ) -> LedgerSnapshot:
        return LedgerSnapshot(
            wallets=self.wallets if wallets is None else wallets,
            links=self.links if links is None else tuple(links),
            offers=self.offers if offers is None else tuple(offers),
            gateways=self.gateways if gateways is None else frozenset(gateways),
            timestamp=self.timestamp if timestamp is None else timestamp,
        )


def _validate(snap: LedgerSnapshot) -> None:
    for wid, w in snap.wallets.items():
        if wid != w.id:
            raise InvariantViolation(f"wallet key {wid!r} does not match id {w.id!r}")
        if not wid or not _WALLET_ID.match(wid):
            raise InvariantViolation(f"bad wallet id {wid!r}")
        if w.xrp_balance < 0:
            raise InvariantViolation(f"wallet {wid}: negative XRP balance")
        if w.tx_count < 0:
            raise InvariantViolation(f"wallet {wid}: negative tx_count")
    seen = set()
    for l in snap.links:
        if l.key in seen:
            raise InvariantViolation(f"duplicate link {l.key}")
        seen.add(l.key)
        if l.debtor == l.creditor:
            raise InvariantViolation(f"self link on {l.debtor}")
        for end in (l.debtor, l.creditor):
            if end not in snap.wallets:
                raise InvariantViolation(f"link {l.key}: unknown wallet {end!r}")
        if l.currency == XRP:
            raise InvariantViolation(f"link {l.key}: XRP is wallet-resident, not a link currency")
        if not _CURRENCY.match(l.currency):
            raise InvariantViolation(f"link {l.key}: bad currency code {l.currency!r}")
        if l.balance < 0:
            raise InvariantViolation(f"link {l.key}: negative balance {l.balance}")
        if l.limit.is_nan() or l.limit < 0:
            raise InvariantViolation(f"link {l.key}: bad limit {l.limit}")
        if l.balance > l.limit:
            raise InvariantViolation(f"link {l.key}: balance {l.balance} exceeds limit {l.limit}")
    ids = set()
    for o in snap.offers:
        if o.id in ids:
            raise InvariantViolation(f"duplicate offer id {o.id}")
        ids.add(o.id)
        if o.owner not in snap.wallets:
            raise InvariantViolation(f"offer {o.id}: unknown owner {o.owner!r}")
        o.validate()


def normalize_flags(snapshot: LedgerSnapshot) -> LedgerSnapshot:
    """Resolve every link-side rippling flag to an explicit boolean.

    Absent flags default to ``False``; a wallet with ``default_ripple`` forces
    ``False`` on its side of every link; remaining explicit flags are kept.
    """
    links = []
    for l in snapshot.links:
        links.append(
            replace(
                l,
                no_ripple_debtor=snapshot.no_ripple(l, l.debtor),
                no_ripple_creditor=snapshot.no_ripple(l, l.creditor),
            )
        )
    return snapshot.evolve(links=links)


def components(adjacency: Mapping[str, Iterable[str]], nodes: Iterable[str] | None = None) -> list[list[str]]:
    """Connected components of an undirected graph, each sorted, restricted to ``nodes``."""
    allowed = set(adjacency) if nodes is None else set(nodes)
    seen: set[str] = set()
    out = []
    for start in sorted(allowed):
        if start in seen:
            continue
        seen.add(start)
        comp = [start]
        stack = [start]
        while stack:
            u = stack.pop()
            for v in adjacency[u]:
                if v in allowed and v not in seen:
                    seen.add(v)
                    comp.append(v)
                    stack.append(v)
        out.append(sorted(comp))
    return out


def largest_component(comps: list[list[str]]) -> list[str]:
    """Largest component; ties go to the one holding the smallest id."""
    if not comps:
        return []
    return min(comps, key=lambda c: (-len(c), c[0]))


def induced(snapshot: LedgerSnapshot, keep: Iterable[str]) -> LedgerSnapshot:
    keep = set(keep)
    return snapshot.evolve(
        wallets={w: snapshot.wallets[w] for w in keep},
        links=[l for l in snapshot.links if l.debtor in keep and l.creditor in keep],
        offers=[o for o in snapshot.offers if o.owner in keep],
        gateways=snapshot.gateways,
    )


def largest_connected_component(snapshot: LedgerSnapshot) -> LedgerSnapshot:
    if not snapshot.wallets:
        raise EmptySnapshot("snapshot has no wallets")
    comp = largest_component(components(snapshot.adjacency))
    if len(comp) == len(snapshot.wallets):
        return snapshot
    return induced(snapshot, comp)


def with_tx_counts(snapshot: LedgerSnapshot, txlog) -> LedgerSnapshot:
    """Fill ``Wallet.tx_count`` with the number of distinct transactions each
    wallet takes part in (as sender, receiver or intermediary)."""
    counts: dict[str, int] = defaultdict(int)
    for tx in txlog:
        for w in tx.participants:
            counts[w] += 1
    return snapshot.evolve(
        wallets={wid: replace(w, tx_count=counts.get(wid, 0)) for wid, w in snapshot.wallets.items()}
    )


def coloring(snapshot: LedgerSnapshot) -> dict[str, str]:
    """Motif colors from role tags: G (gateway), MM (market maker), U (user)."""
    code = {GATEWAY: "G", MARKET_MAKER: "MM", USER: "U"}
    return {wid: code[w.role] for wid, w in snapshot.wallets.items()}
