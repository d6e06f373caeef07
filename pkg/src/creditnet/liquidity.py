"""Liquidity pipeline: currency pruning, conversion to one unit, the
balance/limit flow transform and exact integer max-flow."""

from __future__ import annotations

import random
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from decimal import Decimal
from typing import Iterable

from .errors import EmptyResult, MixedCurrency, NodeMissing, NotEnoughPairs
from .ledger import UNBOUNDED, ZERO, CreditLink, LedgerSnapshot, largest_connected_component, quantize
from .rates import RateTable

SCALE = 10**6
LIQUIDITY_TOLERANCE = Decimal("0.000001")


@dataclass(frozen=True)
class Arc:
    source: str
    target: str
    capacity: Decimal


@dataclass(frozen=True)
class FlowGraph:
    nodes: tuple[str, ...]
    arcs: tuple[Arc, ...]

    def out_capacity(self, node: str) -> Decimal:
        return sum((a.capacity for a in self.arcs if a.source == node), ZERO)

    def in_capacity(self, node: str) -> Decimal:
        return sum((a.capacity for a in self.arcs if a.target == node), ZERO)


# pipeline stages -------------------------------------------------------------


def prune_by_currency(snapshot: LedgerSnapshot, keep: Iterable[str]) -> LedgerSnapshot:
    keep = set(keep)
    if not keep:
        raise ValueError("keep must name at least one currency")
    links = [l for l in snapshot.links if l.currency in keep]
    if not links:
        raise EmptyResult(f"no links in {sorted(keep)}")
    return largest_connected_component(snapshot.evolve(links=links))


def _merge_flag(a: bool | None, b: bool | None) -> bool | None:
    if a or b:
        return True
    if a is None and b is None:
        return None
    return False


def convert_to_common(snapshot: LedgerSnapshot, rates: RateTable, target: str) -> LedgerSnapshot:
    """Rewrite every link into ``target``.

    Links between the same ordered pair that collide after conversion are
    merged: balances and limits add up and a side blocks rippling if it did on
    any merged link.
    """
    merged: dict[tuple[str, str, str], CreditLink] = {}
    for l in snapshot.links:
        r = rates.rate(l.currency, target)
        limit = l.limit if not l.bounded else quantize(l.limit * r)
        conv = replace(l, currency=target, balance=quantize(l.balance * r), limit=limit)
        prev = merged.get(conv.key)
        if prev is not None:
            conv = replace(
                prev,
                balance=prev.balance + conv.balance,
                limit=prev.limit + conv.limit,
                no_ripple_debtor=_merge_flag(prev.no_ripple_debtor, conv.no_ripple_debtor),
                no_ripple_creditor=_merge_flag(prev.no_ripple_creditor, conv.no_ripple_creditor),
            )
        merged[conv.key] = conv
    return snapshot.evolve(links=merged.values())


def to_flow_graph(snapshot: LedgerSnapshot) -> FlowGraph:
    if len(snapshot.currencies) > 1:
        raise MixedCurrency(f"flow transform needs one currency, found {sorted(snapshot.currencies)}")
    arcs = []
    for l in snapshot.links:
        arcs.append(Arc(l.debtor, l.creditor, l.headroom if l.bounded else UNBOUNDED))
        arcs.append(Arc(l.creditor, l.debtor, l.balance))
    return FlowGraph(tuple(sorted(snapshot.wallets)), tuple(arcs))


# max-flow ----------------------------------------------------------------------


class _Dinic:
    def __init__(self, n: int):
        self.n = n
        self.head = [-1] * n
        self.to: list[int] = []
        self.cap: list[int] = []
        self.nxt: list[int] = []

    def add(self, u: int, v: int, c: int) -> None:
        for a, b, cc in ((u, v, c), (v, u, 0)):
            self.to.append(b)
            self.cap.append(cc)
            self.nxt.append(self.head[a])
            self.head[a] = len(self.to) - 1

    def _levels(self, s: int, t: int) -> list[int] | None:
        level = [-1] * self.n
        level[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            e = self.head[u]
            while e != -1:
                v = self.to[e]
                if self.cap[e] > 0 and level[v] < 0:
                    level[v] = level[u] + 1
                    q.append(v)
                e = self.nxt[e]
        return level if level[t] >= 0 else None

    def _blocking(self, s: int, t: int, level: list[int]) -> int:
        it = list(self.head)
        total = 0
        while True:
            # iterative DFS for one augmenting path in the level graph
            stack = [s]
            edges: list[int] = []
            while stack:
                u = stack[-1]
                if u == t:
                    break
                e = it[u]
                advanced = False
                while e != -1:
                    v = self.to[e]
                    if self.cap[e] > 0 and level[v] == level[u] + 1:
                        stack.append(v)
                        edges.append(e)
                        advanced = True
                        break
                    e = self.nxt[e]
                    it[u] = e
                if not advanced:
                    level[u] = -1  # dead end
                    stack.pop()
                    if edges:
                        edges.pop()
                        prev = stack[-1]
                        it[prev] = self.nxt[it[prev]]
            if not stack:
                return total
            push = min(self.cap[e] for e in edges)
            for e in edges:
                self.cap[e] -= push
                self.cap[e ^ 1] += push
            total += push

    def run(self, s: int, t: int) -> int:
        flow = 0
        while True:
            level = self._levels(s, t)
            if level is None:
                return flow
            flow += self._blocking(s, t, level)


def _scaled(value: Decimal) -> int:
    return int((value * SCALE).to_integral_value())


def max_flow(graph: FlowGraph, source: str, sink: str) -> Decimal:
    """Exact maximum ``source`` -> ``sink`` flow; ``UNBOUNDED`` if every cut
    crosses an unbounded arc."""
    index = {w: i for i, w in enumerate(graph.nodes)}
    for w in (source, sink):
        if w not in index:
            raise NodeMissing(f"{w!r} is not in the flow graph")
    if source == sink:
        raise ValueError("source and sink must differ")
    bounded = [a for a in graph.arcs if not a.capacity.is_infinite()]
    big = 1 + sum(_scaled(a.capacity) for a in bounded)
    d = _Dinic(len(graph.nodes))
    for a in graph.arcs:
        c = big if a.capacity.is_infinite() else _scaled(a.capacity)
        if c > 0 and a.source != a.target:
            d.add(index[a.source], index[a.target], c)
    flow = d.run(index[source], index[sink])
    if flow >= big:
        return UNBOUNDED
    return Decimal(flow) / SCALE


# sampling ------------------------------------------------------------------------


@dataclass(frozen=True)
class LiquidityRecord:
    source: str
    sink: str
    flow: Decimal
    endpoint_bound: Decimal
    has_liquidity: bool

    def row(self) -> tuple:
        return (self.source, self.sink, self.flow, self.endpoint_bound, self.has_liquidity)


LIQUIDITY_COLUMNS = ("source", "sink", "flow", "endpoint_bound", "has_liquidity")


@dataclass(frozen=True)
class LiquidityReport:
    fraction: float
    records: tuple[LiquidityRecord, ...]
    seed: int


def endpoint_bound(graph: FlowGraph, source: str, sink: str) -> Decimal:
    return min(graph.out_capacity(source), graph.in_capacity(sink))


def has_liquidity(flow: Decimal, bound: Decimal) -> bool:
    if bound.is_infinite() or flow.is_infinite():
        return flow == bound
    return abs(flow - bound) <= LIQUIDITY_TOLERANCE


def sample_pairs(nodes: tuple[str, ...], n_pairs: int, seed: int) -> list[tuple[str, str]]:
    """Distinct ordered pairs without self-pairs, drawn uniformly."""
    n = len(nodes)
    total = n * (n - 1)
    if n_pairs > total:
        raise NotEnoughPairs(f"{n_pairs} pairs requested, only {total} ordered pairs exist")
    if n_pairs < 0:
        raise ValueError("n_pairs must be non-negative")
    out = []
    for k in random.Random(seed).sample(range(total), n_pairs):
        i, j = divmod(k, n - 1)
        out.append((nodes[i], nodes[j if j < i else j + 1]))
    return out


def _evaluate(args) -> LiquidityRecord:
    graph, s, t, out_cap, in_cap = args
    flow = max_flow(graph, s, t)
    bound = min(out_cap, in_cap)
    return LiquidityRecord(s, t, flow, bound, has_liquidity(flow, bound))


def liquidity_sample(graph: FlowGraph, n_pairs: int, seed: int, workers: int = 1) -> LiquidityReport:
    if len(graph.nodes) < 2:
        raise NotEnoughPairs("need at least two wallets")
    pairs = sample_pairs(graph.nodes, n_pairs, seed)
    out_cap: dict[str, Decimal] = {w: ZERO for w in graph.nodes}
    in_cap: dict[str, Decimal] = {w: ZERO for w in graph.nodes}
    for a in graph.arcs:
        out_cap[a.source] += a.capacity
        in_cap[a.target] += a.capacity
    jobs = [(graph, s, t, out_cap[s], in_cap[t]) for s, t in pairs]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_evaluate, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        records = [_evaluate(j) for j in jobs]
    hits = sum(1 for r in records if r.has_liquidity)
    return LiquidityReport(hits / len(records) if records else 0.0, tuple(records), seed)
