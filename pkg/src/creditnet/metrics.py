"""Structural measurements on the simple undirected collapse of a snapshot."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import sparse

from .errors import ConvergenceFailure, Disconnected, EmptySnapshot
from .ledger import LedgerSnapshot, components

EIGEN_TOL = 1e-9
EIGEN_MAX_ITER = 100_000


def average_degree(n_wallets: int, n_edges: int) -> float:
    return 2.0 * n_edges / n_wallets


def directed_density(n_wallets: int, n_directed_pairs: int) -> float:
    return n_directed_pairs / (n_wallets * (n_wallets - 1)) if n_wallets > 1 else 0.0


@dataclass(frozen=True)
class MetricsReport:
    n_wallets: int
    n_links: int
    avg_degree: float
    clustering: float
    assortativity: float
    density: float
    n_simple_edges: int = 0
    n_directed_pairs: int = 0
    transitivity: float = 0.0
    max_degree: int = 0
    n_leaves: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _degree_assortativity(adj: Mapping[str, frozenset[str]]) -> float:
    xs, ys = [], []
    for u, nbrs in adj.items():
        du = len(nbrs)
        for v in nbrs:
            xs.append(du)
            ys.append(len(adj[v]))
    if not xs:
        return math.nan
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    x -= x.mean()
    y -= y.mean()
    denom = math.sqrt(float((x * x).sum()) * float((y * y).sum()))
    if denom == 0.0:
        return math.nan
    return float((x * y).sum()) / denom


def _triangles_per_node(adj: Mapping[str, frozenset[str]]) -> dict[str, int]:
    tri = dict.fromkeys(adj, 0)
    order = {u: i for i, u in enumerate(sorted(adj))}
    for u, nbrs in adj.items():
        higher = [v for v in nbrs if order[v] > order[u]]
        for i, v in enumerate(higher):
            nv = adj[v]
            for w in higher[i + 1 :]:
                if w in nv:
                    tri[u] += 1
                    tri[v] += 1
                    tri[w] += 1
    return tri


def basic_metrics(snapshot: LedgerSnapshot) -> MetricsReport:
    n = len(snapshot.wallets)
    if n == 0:
        raise EmptySnapshot("snapshot has no wallets")
    adj = snapshot.adjacency
    degrees = {u: len(v) for u, v in adj.items()}
    m_simple = sum(degrees.values()) // 2
    directed_pairs = len({(l.debtor, l.creditor) for l in snapshot.links})
    tri = _triangles_per_node(adj)
    local = [(2.0 * tri[u] / (d * (d - 1))) if d >= 2 else 0.0 for u, d in degrees.items()]
    wedges = sum(d * (d - 1) / 2 for d in degrees.values())
    return MetricsReport(
        n_wallets=n,
        n_links=len(snapshot.links),
        avg_degree=average_degree(n, m_simple),
        clustering=sum(local) / n,
        assortativity=_degree_assortativity(adj),
        density=directed_density(n, directed_pairs),
        n_simple_edges=m_simple,
        n_directed_pairs=directed_pairs,
        transitivity=(sum(tri.values()) / wedges) if wedges else 0.0,
        max_degree=max(degrees.values()),
        n_leaves=sum(1 for d in degrees.values() if d == 1),
    )


# mixing time -----------------------------------------------------------------


def _normalized_adjacency(snapshot: LedgerSnapshot):
    ids = sorted(snapshot.wallets)
    index = {w: i for i, w in enumerate(ids)}
    rows, cols = [], []
    for u, nbrs in snapshot.adjacency.items():
        for v in nbrs:
            rows.append(index[u])
            cols.append(index[v])
    n = len(ids)
    a = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    s = sparse.diags(inv_sqrt) @ a @ sparse.diags(inv_sqrt)
    return s.tocsr(), np.sqrt(deg) / np.linalg.norm(np.sqrt(deg))


def second_eigenvalue(snapshot: LedgerSnapshot, lazy: bool = True, tol: float = EIGEN_TOL, max_iter: int = EIGEN_MAX_ITER) -> float:
    """Second-largest eigenvalue modulus of the (lazy) random-walk matrix.

    The walk matrix is similar to the symmetric ``D^-1/2 A D^-1/2``, whose top
    eigenvector is known in closed form, so power iteration runs on the
    orthogonal complement of that vector.  The lazy walk is positive
    semi-definite; for the plain walk the iteration runs on the square so the
    result is a modulus even on bipartite graphs.
    """
    n = len(snapshot.wallets)
    if n < 2:
        raise Disconnected("need at least two wallets")
    if len(components(snapshot.adjacency)) != 1:
        raise Disconnected("random walk needs a connected graph")
    s, top = _normalized_adjacency(snapshot)
    if lazy:
        def op(x):
            return 0.5 * (x + s @ x)
    else:
        def op(x):
            return s @ (s @ x)

    rng = np.random.default_rng(0x5EED)
    x = rng.standard_normal(n)
    x -= top * (top @ x)
    norm = np.linalg.norm(x)
    if norm == 0.0:
        return 0.0
    x /= norm
    lam = 0.0
    for _ in range(max_iter):
        y = op(x)
        y -= top * (top @ y)
        new_lam = float(x @ y)
        resid = float(np.linalg.norm(y - new_lam * x))
        norm = np.linalg.norm(y)
        if norm < 1e-300:
            return 0.0
        x = y / norm
        if resid < tol or abs(new_lam - lam) < tol * 1e-3:
            lam = new_lam
            break
        lam = new_lam
    else:
        raise ConvergenceFailure(f"power iteration did not converge in {max_iter} steps")
    lam = max(lam, 0.0)
    return lam if lazy else math.sqrt(lam)


def mixing_time_lower_bound(snapshot: LedgerSnapshot, epsilon: float = 0.10, lazy: bool = True) -> float:
    """Lower bound ``mu / (2 (1 - mu)) * ln(1 / (2 eps))`` on the mixing time."""
    if not 0.0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 0.5)")
    mu = second_eigenvalue(snapshot, lazy=lazy)
    if mu >= 1.0 - 1e-12:  # periodic plain walk: never mixes
        return math.inf
    return mu / (2.0 * (1.0 - mu)) * math.log(1.0 / (2.0 * epsilon))


def strip_leaves(snapshot: LedgerSnapshot) -> LedgerSnapshot:
    """Core obtained by repeatedly removing wallets with a single neighbor."""
    from .ledger import induced

    adj = {u: set(v) for u, v in snapshot.adjacency.items()}
    queue = [u for u, v in adj.items() if len(v) <= 1]
    removed = set()
    while queue:
        u = queue.pop()
        if u in removed or len(adj[u]) > 1:
            continue
        removed.add(u)
        for v in adj[u]:
            adj[v].discard(u)
            if len(adj[v]) <= 1:
                queue.append(v)
        adj[u] = set()
    return induced(snapshot, [u for u in snapshot.wallets if u not in removed])


# motifs ---------------------------------------------------------------------------

COLORS = ("G", "MM", "U")


def path_pattern(center: str, end_a: str, end_b: str) -> str:
    a, b = sorted((end_a, end_b))
    return f"{a}-{center}-{b}"


def triangle_pattern(a: str, b: str, c: str) -> str:
    return "triangle:" + ",".join(sorted((a, b, c)))


@dataclass(frozen=True)
class MotifCensus:
    counts: dict[str, int]
    total: int
    frequencies: dict[str, float] = field(default_factory=dict)

    @property
    def most_frequent(self) -> str | None:
        if not self.counts:
            return None
        return min(self.counts, key=lambda k: (-self.counts[k], k))


def motif_census(snapshot: LedgerSnapshot, coloring: Mapping[str, str]) -> MotifCensus:
    """Count connected 3-wallet induced subgraphs by colored pattern.

    Open wedges are counted per center from neighbor color tallies; closed
    wedges are found by edge intersection and moved to the triangle buckets.
    """
    adj = snapshot.adjacency
    missing = [w for w in adj if w not in coloring]
    if missing:
        raise ValueError(f"coloring misses wallets: {missing[:5]}")
    counts: Counter[str] = Counter()
    for v, nbrs in adj.items():
        tally = Counter(coloring[u] for u in nbrs)
        cv = coloring[v]
        keys = sorted(tally)
        for i, a in enumerate(keys):
            na = tally[a]
            if na >= 2:
                counts[path_pattern(cv, a, a)] += na * (na - 1) // 2
            for b in keys[i + 1 :]:
                counts[path_pattern(cv, a, b)] += na * tally[b]
    order = {u: i for i, u in enumerate(sorted(adj))}
    for u, nbrs in adj.items():
        higher = sorted((v for v in nbrs if order[v] > order[u]), key=order.__getitem__)
        for i, v in enumerate(higher):
            for w in higher[i + 1 :]:
                if w not in adj[v]:
                    continue
                cu, cv, cw = coloring[u], coloring[v], coloring[w]
                counts[triangle_pattern(cu, cv, cw)] += 1
                # each closed wedge was tallied as an open one at all three centers
                counts[path_pattern(cu, cv, cw)] -= 1
                counts[path_pattern(cv, cu, cw)] -= 1
                counts[path_pattern(cw, cu, cv)] -= 1
    counts = Counter({k: c for k, c in counts.items() if c > 0})
    total = sum(counts.values())
    freqs = {k: c / total for k, c in sorted(counts.items())} if total else {}
    return MotifCensus(dict(sorted(counts.items())), total, freqs)
