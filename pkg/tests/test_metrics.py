import itertools
import math
from decimal import ROUND_DOWN, Decimal

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import barbell, brute_triples, clique, link, simple_graph, snap
from creditnet.errors import Disconnected, EmptySnapshot
from creditnet.ledger import coloring
from creditnet.metrics import (
    average_degree,
    basic_metrics,
    directed_density,
    mixing_time_lower_bound,
    motif_census,
    second_eigenvalue,
    strip_leaves,
)

# (wallets, links, printed avg degree, printed density mantissa at 1e-5)
SNAPSHOT_SIZES = [
    (14657, 26969, "3.68", "12"),
    (40051, 82305, "4.11", "5.1"),
    (61173, 119790, "3.91", "3.2"),
    (96953, 190675, "3.93", "2.0"),
    (181233, 352420, "3.88", "1.0"),
]

# largest-component sizes of the monthly snapshots
COMPONENT_SIZES = [
    (908, 1554, "3.422"), (5436, 8679, "3.19"), (14744, 23418, "3.17"), (23855, 40691, "3.41"),
    (30912, 55839, "3.61"), (40490, 73519, "3.63"), (51559, 89809, "3.48"), (57090, 100621, "3.52"),
    (62211, 109887, "3.53"), (69293, 117916, "3.40"), (79387, 132389, "3.33"), (97113, 172547, "3.55"),
]


def printed(value: float, text: str) -> bool:
    """The published tables cut values at the printed digit rather than rounding."""
    return Decimal(repr(value)).quantize(Decimal(text), rounding=ROUND_DOWN) == Decimal(text)


@pytest.mark.parametrize("v,e,deg,dens", SNAPSHOT_SIZES)
def test_snapshot_size_row(v, e, deg, dens):
    assert printed(average_degree(v, e), deg)
    assert printed(directed_density(v, e) * 1e5, dens)


@pytest.mark.parametrize("v,e,deg", COMPONENT_SIZES)
def test_component_degree(v, e, deg):
    assert printed(average_degree(v, e), deg)


def to_nx(s):
    g = nx.Graph()
    g.add_nodes_from(s.wallets)
    g.add_edges_from((l.debtor, l.creditor) for l in s.links)
    return g


def test_small_graph_values():
    tri = simple_graph(clique("abc"))
    assert basic_metrics(tri).clustering == 1.0
    p4 = simple_graph([("a", "b"), ("b", "c"), ("c", "d")])
    assert basic_metrics(p4).assortativity == pytest.approx(-0.5, abs=1e-12)
    with pytest.raises(EmptySnapshot):
        basic_metrics(snap())


def test_density_counts_ordered_pairs():
    s = snap([link("a", "b", 1), link("b", "a", 1), link("a", "b", 1, currency="EUR")])
    m = basic_metrics(s)
    assert m.n_simple_edges == 1 and m.n_directed_pairs == 2 and m.n_links == 3
    assert m.density == 1.0


@st.composite
def random_graphs(draw, max_n=12):
    n = draw(st.integers(2, max_n))
    pairs = list(itertools.combinations(range(n), 2))
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    return [f"n{i:02d}" for i in range(n)], [(f"n{a:02d}", f"n{b:02d}") for a, b in chosen]


@pytest.mark.filterwarnings("ignore::RuntimeWarning", "ignore:An input array is constant")
@settings(max_examples=80, deadline=None)
@given(random_graphs())
def test_metrics_match_networkx(g):
    nodes, edges = g
    s = simple_graph(edges, nodes=nodes)
    m = basic_metrics(s)
    ref = to_nx(s)
    assert m.clustering == pytest.approx(nx.average_clustering(ref), abs=1e-12)
    assert m.transitivity == pytest.approx(nx.transitivity(ref), abs=1e-12)
    assert m.avg_degree == pytest.approx(2 * ref.number_of_edges() / ref.number_of_nodes())
    r = nx.degree_pearson_correlation_coefficient(ref) if edges else math.nan
    if math.isnan(m.assortativity) or math.isnan(r):
        assert math.isnan(m.assortativity) == math.isnan(r) or not edges
    else:
        assert m.assortativity == pytest.approx(r, abs=1e-9)


# mixing ------------------------------------------------------------------------


def lazy_mu_dense(s):
    ids = sorted(s.wallets)
    a = nx.to_numpy_array(to_nx(s), nodelist=ids)
    d = a.sum(axis=1)
    sym = a / np.sqrt(np.outer(d, d))
    ev = np.sort(np.linalg.eigvalsh(0.5 * (np.eye(len(ids)) + sym)))
    return ev[-2]


def test_k4_closed_form():
    k4 = simple_graph(clique("abcd"))
    # lazy walk on K4: eigenvalues 1 and (1 - 1/3) / 2 = 1/3
    assert second_eigenvalue(k4) == pytest.approx(1 / 3, abs=1e-9)
    assert mixing_time_lower_bound(k4, 0.1) == pytest.approx(math.log(5) / 4, abs=1e-6)


def test_plain_walk_modulus():
    k4 = simple_graph(clique("abcd"))
    assert second_eigenvalue(k4, lazy=False) == pytest.approx(1 / 3, abs=1e-6)
    square = simple_graph([("a", "b"), ("b", "c"), ("c", "d"), ("d", "a")])
    assert mixing_time_lower_bound(square, 0.1, lazy=False) == math.inf


@settings(max_examples=30, deadline=None)
@given(random_graphs(max_n=14))
def test_second_eigenvalue_matches_dense(g):
    nodes, edges = g
    s = simple_graph(edges, nodes=nodes)
    if not nx.is_connected(to_nx(s)):
        with pytest.raises(Disconnected):
            second_eigenvalue(s)
        return
    assert second_eigenvalue(s) == pytest.approx(lazy_mu_dense(s), abs=1e-6)


def test_epsilon_monotone():
    s = simple_graph(barbell(5))
    assert mixing_time_lower_bound(s, 0.25) < mixing_time_lower_bound(s, 0.05)
    with pytest.raises(ValueError):
        mixing_time_lower_bound(s, 0.5)


@pytest.mark.parametrize("n", [6, 10, 20, 40])
def test_clique_mixes_faster_than_barbell(n):
    k = simple_graph(clique([f"n{i:02d}" for i in range(n)]))
    b = simple_graph(barbell(n // 2))
    assert mixing_time_lower_bound(k, 0.1) < mixing_time_lower_bound(b, 0.1)


def test_strip_leaves_keeps_core():
    s = simple_graph(clique("abc") + [("c", "x"), ("x", "y")])
    assert sorted(strip_leaves(s).wallets) == ["a", "b", "c"]


# motifs ------------------------------------------------------------------------


def test_star_motif():
    s = simple_graph([("g", "a"), ("g", "b"), ("g", "c")], gateways={"g"})
    census = motif_census(s, coloring(s))
    assert census.frequencies == {"U-G-U": 1.0}


def test_user_triangle():
    s = simple_graph(clique("abc"))
    assert motif_census(s, coloring(s)).frequencies == {"triangle:U,U,U": 1.0}


def test_five_node_mixed():
    edges = [("g", "a"), ("g", "b"), ("a", "b"), ("b", "m"), ("m", "c")]
    s = simple_graph(edges, gateways={"g"})
    colors = {"g": "G", "a": "U", "b": "U", "m": "MM", "c": "U"}
    assert motif_census(s, colors).counts == brute_triples(s.adjacency, colors)


@settings(max_examples=80, deadline=None)
@given(random_graphs(max_n=12), st.randoms(use_true_random=False))
def test_motifs_match_brute_force(g, rnd):
    nodes, edges = g
    s = simple_graph(edges, nodes=nodes)
    colors = {w: rnd.choice(["G", "MM", "U"]) for w in s.wallets}
    census = motif_census(s, colors)
    assert census.counts == brute_triples(s.adjacency, colors)
    if census.total:
        assert sum(census.frequencies.values()) == pytest.approx(1.0, abs=1e-9)


def test_motif_rejects_partial_coloring():
    s = simple_graph([("a", "b")])
    with pytest.raises(ValueError):
        motif_census(s, {"a": "U"})


def test_g13_fixture_motif_is_user_gateway_user(g13):
    census = motif_census(g13, coloring(g13))
    assert census.most_frequent == "U-G-U"
