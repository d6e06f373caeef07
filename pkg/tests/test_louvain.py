import itertools

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import clique, simple_graph
from creditnet.louvain import _Graph, _one_level, louvain, modularity
from creditnet.synth import SynthConfig, generate_synthetic


def two_cliques():
    a = [f"a{i}" for i in range(5)]
    b = [f"b{i}" for i in range(5)]
    return simple_graph(clique(a) + clique(b) + [("a0", "b0")]), a, b


def test_two_cliques():
    s, a, b = two_cliques()
    res = louvain(s, 1.0, seed=0)
    assert res.n_communities == 2
    assert len({res.communities[w] for w in a}) == 1
    assert len({res.communities[w] for w in b}) == 1
    assert res.modularity == pytest.approx(modularity(s.adjacency, res.communities, 1.0), abs=1e-12)


def test_single_clique():
    s = simple_graph(clique("abcdef"))
    assert louvain(s, 1.0, seed=3).n_communities == 1


def test_gateways_split_at_low_resolution():
    s = generate_synthetic(SynthConfig(n_gateways=3, users_per_gateway=10, inter_gateway_links=2, seed=5))
    res = louvain(s, 0.45, seed=0)
    assert res.n_communities >= 3
    members = res.members()
    for gw in s.gateways:
        c = res.communities[gw]
        assert sum(1 for g in s.gateways if res.communities[g] == c) == 1
    for c, ws in members.items():
        assert sum(1 for w in ws if w in s.gateways) == 1


@st.composite
def graphs(draw):
    n = draw(st.integers(2, 14))
    pairs = list(itertools.combinations(range(n), 2))
    edges = draw(st.lists(st.sampled_from(pairs), unique=True, min_size=1, max_size=len(pairs)))
    return [f"n{i:02d}" for i in range(n)], [(f"n{a:02d}", f"n{b:02d}") for a, b in edges]


@settings(max_examples=60, deadline=None)
@given(graphs(), st.floats(0.2, 2.0), st.integers(0, 1000))
def test_modularity_monotone_and_matches_networkx(g, gamma, seed):
    nodes, edges = g
    s = simple_graph(edges, nodes=nodes)
    res = louvain(s, gamma, seed)
    hist = res.pass_modularity
    assert all(b >= a - 1e-12 for a, b in zip(hist, hist[1:]))
    ref = nx.Graph(edges)
    ref.add_nodes_from(nodes)
    comms = {}
    for w, c in res.communities.items():
        comms.setdefault(c, set()).add(w)
    expected = nx.community.modularity(ref, list(comms.values()), resolution=gamma)
    assert res.modularity == pytest.approx(expected, abs=1e-9)
    assert set(res.communities) == set(s.wallets)


@settings(max_examples=40, deadline=None)
@given(graphs(), st.integers(0, 1000))
def test_deterministic_and_local_fixed_point(g, seed):
    import random

    nodes, edges = g
    s = simple_graph(edges, nodes=nodes)
    a = louvain(s, 1.0, seed)
    assert a == louvain(s, 1.0, seed)
    # collapsing the final partition leaves nothing for the local phase to improve
    ids = sorted(s.wallets)
    k = a.n_communities
    agg = _Graph(k)
    for u, v in edges:
        agg.add(a.communities[u], a.communities[v], 1.0)
    comm, improved = _one_level(agg, 1.0, random.Random(seed))
    assert not improved or len(set(comm)) == k
    assert len(ids) == len(a.communities)


def test_rejects_bad_resolution():
    s, _, _ = two_cliques()
    with pytest.raises(ValueError):
        louvain(s, 0.0)
