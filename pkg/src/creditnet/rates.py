"""Exchange-rate lookups: a static :class:`RateTable` and a timestamped
:class:`RateSeries` used as real-world ground truth."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from decimal import Decimal
from typing import Iterable, Mapping

from .errors import InvariantViolation, MissingRate
from .ledger import EPOCH

SANITY_BAND = (Decimal("0.98"), Decimal("1.02"))


@dataclass(frozen=True)
class RateTable:
    """``rates[(base, quote)]`` is the number of ``quote`` units per ``base`` unit."""

    rates: Mapping[tuple[str, str], Decimal]
    timestamp: datetime = EPOCH

    def __post_init__(self):
        for (base, quote), r in self.rates.items():
            if r <= 0:
                raise InvariantViolation(f"rate {base}->{quote} must be positive")
            back = self.rates.get((quote, base))
            if back is not None and not SANITY_BAND[0] <= r * back <= SANITY_BAND[1]:
                raise InvariantViolation(f"rates {base}<->{quote} are inconsistent: product {r * back}")

    def rate(self, base: str, quote: str) -> Decimal:
        if base == quote:
            return Decimal(1)
        r = self.rates.get((base, quote))
        if r is not None:
            return r
        back = self.rates.get((quote, base))
        if back is not None:
            return 1 / back
        raise MissingRate(base, quote)

    def convert(self, amount: Decimal, base: str, quote: str) -> Decimal:
        return amount * self.rate(base, quote)


@dataclass
class RateSeries:
    """Historical reference rates; lookups take the latest sample at or
    before the query instant and refuse samples older than ``max_gap``."""

    samples: dict[tuple[str, str], list[tuple[datetime, Decimal]]] = field(default_factory=dict)
    max_gap: timedelta = timedelta(hours=24)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[datetime, str, str, Decimal]], max_gap=timedelta(hours=24)):
        series = cls(max_gap=max_gap)
        for ts, base, quote, rate in rows:
            series.add(ts, base, quote, rate)
        return series

    def add(self, ts: datetime, base: str, quote: str, rate: Decimal) -> None:
        if rate <= 0:
            raise InvariantViolation(f"rate {base}->{quote} at {ts} must be positive")
        bucket = self.samples.setdefault((base, quote), [])
        bisect.insort(bucket, (ts, rate))

    def _lookup(self, base: str, quote: str, at: datetime) -> Decimal | None:
        bucket = self.samples.get((base, quote))
        if not bucket:
            return None
        i = bisect.bisect_right(bucket, (at, Decimal("Infinity"))) - 1
        if i < 0:
            return None
        ts, rate = bucket[i]
        if at - ts > self.max_gap:
            return None
        return rate

    def rate(self, base: str, quote: str, at: datetime) -> Decimal:
        if base == quote:
            return Decimal(1)
        r = self._lookup(base, quote, at)
        if r is not None:
            return r
        back = self._lookup(quote, base, at)
        if back is not None:
            return 1 / back
        raise MissingRate(base, quote, f"no sample within {self.max_gap} before {at.isoformat()}")

    def value(self, amount: Decimal, currency: str, reference: str, at: datetime) -> Decimal:
        return amount * self.rate(currency, reference, at)
