"""Deterministic gateway-centric network generator for fixtures.

Every user holds a credit link issued by its home gateway (gateway is the
debtor), gateways are chained and then cross-linked, and ``extra_links``
adds user links to foreign gateways or to other users so that the E/V ratio
can be tuned to match real snapshots.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from datetime import datetime, timezone
from decimal import Decimal
from itertools import combinations

from .errors import ConfigError
from .ledger import UNBOUNDED, CreditLink, ExchangeOffer, LedgerSnapshot, Wallet, quantize

DEFAULT_TIMESTAMP = datetime(2017, 8, 31, tzinfo=timezone.utc)


@dataclass(frozen=True)
class SynthConfig:
    n_gateways: int = 3
    users_per_gateway: int = 10
    inter_gateway_links: int = 2
    currencies: tuple[str, ...] = ("USD",)
    balance_range: tuple[Decimal, Decimal] = (Decimal(1), Decimal(1000))
    # None -> unbounded; k -> limit = k * balance (at least k)
    limit_multiple: Decimal | None = None
    ripple_policy: float = 0.5
    seed: int = 0
    extra_links: int = 0
    market_makers: int = 0
    timestamp: datetime = DEFAULT_TIMESTAMP

    def validate(self) -> None:
        if self.n_gateways < 1:
            raise ConfigError("n_gateways must be positive")
        if self.users_per_gateway < 1:
            raise ConfigError("users_per_gateway must be positive")
        max_inter = self.n_gateways * (self.n_gateways - 1) // 2
        if not 0 <= self.inter_gateway_links <= max_inter:
            raise ConfigError(f"inter_gateway_links must be within [0, {max_inter}]")
        if not self.currencies:
            raise ConfigError("at least one currency is required")
        lo, hi = self.balance_range
        if lo < 0 or hi < lo:
            raise ConfigError("balance_range must satisfy 0 <= min <= max")
        if self.limit_multiple is not None and self.limit_multiple < 1:
            raise ConfigError("limit multiple must be >= 1")
        if not 0.0 <= self.ripple_policy <= 1.0:
            raise ConfigError("ripple_policy must be a fraction")
        if self.extra_links < 0 or self.market_makers < 0:
            raise ConfigError("extra_links and market_makers must be non-negative")
        if self.market_makers and len(self.currencies) < 2:
            raise ConfigError("market makers need at least two currencies")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


def gateway_id(i: int) -> str:
    return f"g{i:03d}"


def user_id(g: int, u: int) -> str:
    return f"u{g:03d}-{u:04d}"


def generate_synthetic(config: SynthConfig) -> LedgerSnapshot:
    config.validate()
    rng = random.Random(config.seed)
    lo, hi = config.balance_range
    lo_c, hi_c = int(lo * 100), int(hi * 100)

    def balance() -> Decimal:
        return Decimal(rng.randint(lo_c, hi_c)) / 100

    def limit_for(b: Decimal) -> Decimal:
        if config.limit_multiple is None:
            return UNBOUNDED
        return quantize(max(b, Decimal(1)) * config.limit_multiple)

    def user_flag() -> bool:
        return rng.random() >= config.ripple_policy

    def currency() -> str:
        return config.currencies[rng.randrange(len(config.currencies))]

    gateways = [gateway_id(i) for i in range(config.n_gateways)]
    wallets = {g: Wallet(g, Decimal(rng.randint(10_000, 1_000_000)), default_ripple=True) for g in gateways}
    users: list[tuple[int, str]] = []
    links: dict[tuple[str, str, str], CreditLink] = {}
    for gi, g in enumerate(gateways):
        for ui in range(config.users_per_gateway):
            u = user_id(gi, ui)
            wallets[u] = Wallet(u, Decimal(rng.randint(20, 5_000)))
            users.append((gi, u))
            b = balance()
            cur = currency()
            links[(g, u, cur)] = CreditLink(g, u, cur, b, limit_for(b), no_ripple_creditor=user_flag())

    chain = [(i, i + 1) for i in range(config.n_gateways - 1)]
    rest = [p for p in combinations(range(config.n_gateways), 2) if p not in set(chain)]
    rng.shuffle(rest)
    for a, b_ in (chain + rest)[: config.inter_gateway_links]:
        b = balance()
        cur = currency()
        links[(gateways[a], gateways[b_], cur)] = CreditLink(gateways[a], gateways[b_], cur, b, limit_for(b))

    linked = {frozenset((l.debtor, l.creditor)) for l in links.values()}
    user_ids = [u for _, u in users]
    attempts = 0
    added = 0
    while added < config.extra_links:
        attempts += 1
        if attempts > 50 * (config.extra_links + 10):
            raise ConfigError("extra_links exceeds the number of available wallet pairs")
        u = user_ids[rng.randrange(len(user_ids))]
        # half the extra links go to a foreign gateway, half to a peer user
        other = gateways[rng.randrange(len(gateways))] if rng.random() < 0.5 else user_ids[rng.randrange(len(user_ids))]
        pair = frozenset((u, other))
        if other == u or pair in linked:
            continue
        linked.add(pair)
        b = balance()
        cur = currency()
        if other in wallets and wallets[other].default_ripple:
            links[(other, u, cur)] = CreditLink(other, u, cur, b, limit_for(b), no_ripple_creditor=user_flag())
        else:
            links[(other, u, cur)] = CreditLink(
                other, u, cur, b, limit_for(b), no_ripple_debtor=user_flag(), no_ripple_creditor=user_flag()
            )
        added += 1

    offers = []
    if config.market_makers:
        makers = rng.sample(user_ids, min(config.market_makers, len(user_ids)))
        for n, m in enumerate(sorted(makers)):
            gives, takes = rng.sample(list(config.currencies), 2)
            amount = balance()
            rate = Decimal(rng.randint(50, 200)) / 100
            offers.append(
                ExchangeOffer(f"offer-{n:04d}", m, gives, amount, takes, quantize(amount * rate), config.timestamp)
            )

    return LedgerSnapshot(wallets, tuple(links.values()), tuple(offers), frozenset(gateways), config.timestamp)
