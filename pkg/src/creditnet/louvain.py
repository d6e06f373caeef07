"""Two-phase Louvain community detection with a resolution parameter.

Modularity with resolution ``gamma`` on an undirected weighted graph is
``sum_c [ in_c / m  -  gamma * (tot_c / 2m)^2 ]`` where ``in_c`` is the edge
weight inside community ``c``, ``tot_c`` the summed degree of its members and
``m`` the total edge weight.
"""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass, field

from .errors import EmptySnapshot
from .ledger import LedgerSnapshot

_EPS = 1e-12


@dataclass(frozen=True)
class CommunityAssignment:
    resolution: float
    communities: dict[str, int]
    modularity: float
    pass_modularity: tuple[float, ...] = field(default=())

    @property
    def n_communities(self) -> int:
        return len(set(self.communities.values()))

    def sizes(self) -> dict[int, int]:
        out: dict[int, int] = defaultdict(int)
        for c in self.communities.values():
            out[c] += 1
        return dict(sorted(out.items()))

    def members(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = defaultdict(list)
        for w, c in sorted(self.communities.items()):
            out[c].append(w)
        return dict(sorted(out.items()))


def modularity(adjacency, partition: dict, resolution: float = 1.0) -> float:
    """Direct evaluation on a simple unweighted graph (``adjacency`` maps node -> neighbors)."""
    m = sum(len(n) for n in adjacency.values()) / 2.0
    if m == 0:
        return 0.0
    inside: dict = defaultdict(float)
    tot: dict = defaultdict(float)
    for u, nbrs in adjacency.items():
        cu = partition[u]
        tot[cu] += len(nbrs)
        for v in nbrs:
            if partition[v] == cu:
                inside[cu] += 0.5
    return sum(inside[c] / m - resolution * (tot[c] / (2.0 * m)) ** 2 for c in tot)


class _Graph:
    """Weighted graph on integer nodes; ``loops[i]`` is the self-loop weight."""

    def __init__(self, n: int):
        self.n = n
        self.nbrs: list[dict[int, float]] = [dict() for _ in range(n)]
        self.loops = [0.0] * n

    def add(self, u: int, v: int, w: float) -> None:
        if u == v:
            self.loops[u] += w
        else:
            self.nbrs[u][v] = self.nbrs[u].get(v, 0.0) + w
            self.nbrs[v][u] = self.nbrs[v].get(u, 0.0) + w

    def degree(self, u: int) -> float:
        return sum(self.nbrs[u].values()) + 2.0 * self.loops[u]

    def total_weight(self) -> float:
        return sum(sum(n.values()) for n in self.nbrs) / 2.0 + sum(self.loops)


def _modularity(g: _Graph, comm: list[int], gamma: float) -> float:
    m = g.total_weight()
    if m == 0:
        return 0.0
    inside: dict[int, float] = defaultdict(float)
    tot: dict[int, float] = defaultdict(float)
    for u in range(g.n):
        c = comm[u]
        tot[c] += g.degree(u)
        inside[c] += g.loops[u]
        for v, w in g.nbrs[u].items():
            if comm[v] == c:
                inside[c] += w / 2.0
    return sum(inside[c] / m - gamma * (tot[c] / (2.0 * m)) ** 2 for c in tot)


def _one_level(g: _Graph, gamma: float, rng: random.Random) -> tuple[list[int], bool]:
    m = g.total_weight()
    comm = list(range(g.n))
    deg = [g.degree(u) for u in range(g.n)]
    tot = list(deg)
    order = list(range(g.n))
    rng.shuffle(order)
    improved = False
    if m == 0:
        return comm, False
    moved = True
    while moved:
        moved = False
        for u in order:
            cu = comm[u]
            links: dict[int, float] = defaultdict(float)
            for v, w in g.nbrs[u].items():
                links[comm[v]] += w
            tot[cu] -= deg[u]
            # gain of inserting u into c, up to a shared positive factor
            def gain(c):
                return links.get(c, 0.0) - gamma * tot[c] * deg[u] / (2.0 * m)

            best_c, best_g = cu, gain(cu)
            for c in sorted(links):
                if c == cu:
                    continue
                gc = gain(c)
                if gc > best_g + _EPS:
                    best_c, best_g = c, gc
                elif abs(gc - best_g) <= _EPS and best_c != cu and c < best_c:
                    best_c = c
            tot[best_c] += deg[u]
            if best_c != cu:
                comm[u] = best_c
                moved = True
                improved = True
    return comm, improved


def _relabel(comm: list[int]) -> list[int]:
    mapping: dict[int, int] = {}
    return [mapping.setdefault(c, len(mapping)) for c in comm]


def louvain(snapshot: LedgerSnapshot, resolution: float = 1.0, seed: int = 0) -> CommunityAssignment:
    if not snapshot.wallets:
        raise EmptySnapshot("snapshot has no wallets")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    ids = sorted(snapshot.wallets)
    index = {w: i for i, w in enumerate(ids)}
    g = _Graph(len(ids))
    for u, nbrs in snapshot.adjacency.items():
        for v in nbrs:
            if index[u] < index[v]:
                g.add(index[u], index[v], 1.0)
    rng = random.Random(seed)
    membership = list(range(len(ids)))  # original node -> current super-node
    history = [_modularity(g, list(range(g.n)), resolution)]
    while True:
        comm, improved = _one_level(g, resolution, rng)
        if not improved:
            break
        comm = _relabel(comm)
        q = _modularity(g, comm, resolution)
        if q <= history[-1] + _EPS:
            break
        history.append(q)
        membership = [comm[s] for s in membership]
        k = max(comm) + 1
        agg = _Graph(k)
        for u in range(g.n):
            agg.loops[comm[u]] += g.loops[u]
            for v, w in g.nbrs[u].items():
                if u < v:
                    agg.add(comm[u], comm[v], w)
        g = agg
    # canonical ids: ordered by each community's smallest member
    first: dict[int, int] = {}
    for i in range(len(ids)):
        first.setdefault(membership[i], len(first))
    communities = {w: first[membership[i]] for i, w in enumerate(ids)}
    q = modularity(snapshot.adjacency, communities, resolution)
    return CommunityAssignment(resolution, communities, q, tuple(history))
