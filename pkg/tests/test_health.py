import random
from dataclasses import replace
from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import D, T0, barbell, clique, link, snap, simple_graph
from creditnet.errors import EmptyWindow, MissingTxLog, NoPath, NotAGateway, UnknownWallet
from creditnet.health import (
    CIRCULAR,
    DEGREE,
    INBOUND,
    TX_FREQUENCY,
    credit_acquisition,
    removal_analysis,
    rippling_risk_scan,
    select_disruptive,
    stuck_credit,
)
from creditnet.ledger import XRP, CreditLink, ExchangeOffer, LedgerSnapshot, normalize_flags
from creditnet.rates import RateTable
from creditnet.settlement import TxIntent, execute_circular_xrp, execute_transaction
from creditnet.synth import SynthConfig, generate_synthetic

RATES = RateTable({("EUR", "USD"): D("1.1"), ("BTC", "USD"): D(4000)})


# rippling risk ------------------------------------------------------------------


def test_single_link_not_prone():
    s = snap([link("G", "w", 10)], gateways={"G"})
    assert rippling_risk_scan(s, RATES).prone_wallets == ()


def test_two_gateway_links_prone():
    s = snap([link("G1", "w", 30, 50), link("G2", "w", 70)], gateways={"G1", "G2"})
    rep = rippling_risk_scan(s, RATES)
    assert rep.prone_wallets == ("w",)
    assert rep.credit_at_risk == D(100)
    assert rep.limit_gap_exposure == D(20)
    assert rep.per_wallet["w"] == [("USD", [("G1", "w", "USD"), ("G2", "w", "USD")])]


def test_only_gateway_facing_balances_count():
    s = snap([link("G", "w", 30), link("x", "w", 70, currency="USD")], gateways={"G"})
    rep = rippling_risk_scan(s, RATES)
    assert rep.prone_wallets == ("w",) and rep.credit_at_risk == D(30)


def test_flags_or_currency_split_remove_risk():
    flagged = snap([link("G1", "w", 30, nr_c=True), link("G2", "w", 70, nr_c=True)], gateways={"G1", "G2"})
    rep = rippling_risk_scan(flagged, RATES)
    assert rep.prone_wallets == () and rep.credit_at_risk == 0
    split = snap([link("G1", "w", 30), link("G2", "w", 70, currency="EUR")], gateways={"G1", "G2"})
    assert rippling_risk_scan(split, RATES).prone_wallets == ()


def test_converted_risk_and_gateways_skipped():
    s = snap([link("G1", "w", 10, currency="EUR"), link("G2", "w", 20, currency="EUR"), link("G1", "G2", 5)],
             gateways={"G1", "G2"})
    rep = rippling_risk_scan(s, RATES)
    assert rep.prone_wallets == ("w",) and rep.credit_at_risk == D(33)


def relabel(s: LedgerSnapshot, m: dict) -> LedgerSnapshot:
    ws = {m[w]: replace(x, id=m[w]) for w, x in s.wallets.items()}
    links = [
        CreditLink(m[l.debtor], m[l.creditor], l.currency, l.balance, l.limit, l.no_ripple_debtor, l.no_ripple_creditor)
        for l in s.links
    ]
    return LedgerSnapshot(ws, tuple(links), (), frozenset(m[g] for g in s.gateways), s.timestamp)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_rippling_scan_permutation_equivariant(seed):
    s = generate_synthetic(SynthConfig(n_gateways=3, users_per_gateway=5, extra_links=6, ripple_policy=0.5,
                                       limit_multiple=D(2), currencies=("USD", "EUR"), seed=seed))
    ids = sorted(s.wallets)
    shuffled = ids[:]
    random.Random(seed).shuffle(shuffled)
    m = dict(zip(ids, (f"z{i:03d}" for i in range(len(ids)))))
    m = dict(zip(ids, (m[w] for w in shuffled)))
    a = rippling_risk_scan(s, RATES)
    b = rippling_risk_scan(relabel(s, m), RATES)
    assert sorted(m[w] for w in a.prone_wallets) == list(b.prone_wallets)
    assert a.credit_at_risk == b.credit_at_risk and a.limit_gap_exposure == b.limit_gap_exposure


# disruptive selection and removal -----------------------------------------------------


def test_star_hub_selected():
    s = simple_graph([("h", x) for x in "abcd"])
    assert select_disruptive(s, k=1, criterion=DEGREE) == ["h"]


def test_degree_ties_lexicographic():
    s = simple_graph([("h", x) for x in "abcde"] + [("q", "a"), ("q", "b"), ("p", "c"), ("p", "d")])
    assert select_disruptive(s, k=3) == ["h", "a", "b"]


def test_tx_frequency_and_missing_log():
    s = snap([link("G", n, 100) for n in "abcdw"], gateways={"G"}, default_ripple={"G"})
    pairs = [("w", x) for x in "abcd"] * 2 + [(x, "w") for x in "ab"] + [("a", "b"), ("c", "d")]
    txs = []
    for i, (a, b) in enumerate(pairs):
        s, tx = execute_transaction(s, TxIntent(a, b, D(1), "USD"), timestamp=T0 + timedelta(seconds=i))
        txs.append(tx)
    # G appears on every path, so look past it
    top = select_disruptive(s, txs, k=2, criterion=TX_FREQUENCY)
    assert top == ["G", "w"]
    assert sum("w" in tx.participants for tx in txs) == 10
    with pytest.raises(MissingTxLog):
        select_disruptive(s, None, 1, TX_FREQUENCY)


def test_leaf_removal_half():
    nodes = [f"n{i:03d}" for i in range(101)]
    s = simple_graph(list(zip(nodes, nodes[1:])))
    rec = removal_analysis(s, [nodes[-1]])
    assert rec.lcc_sizes == (100,) and rec.rsl_factors == (0.5,)


def test_barbell_cut_vertex_one():
    a = [f"a{i:02d}" for i in range(50)]
    b = [f"b{i:02d}" for i in range(50)]
    s = simple_graph(clique(a) + clique(b) + [("a00", "hub"), ("hub", "b00")])
    rec = removal_analysis(s, ["hub"])
    assert rec.initial_lcc == 101 and rec.lcc_sizes == (50,) and rec.rsl_factors == (1.0,)


def test_star_center_exceeds_one():
    # the factor is not clamped: three isolated leaves give 1.5
    s = simple_graph([("h", x) for x in "abc"])
    assert removal_analysis(s, ["h"]).rsl_factors == (1.5,)


def test_isolated_component_removal():
    s = simple_graph(clique("abcd") + [("x", "y")])
    assert removal_analysis(s, ["x"]).lcc_sizes == (4,)
    with pytest.raises(UnknownWallet):
        removal_analysis(s, ["nope"])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_lcc_nonincreasing_and_rsl_floor(seed):
    rng = random.Random(seed)
    s = generate_synthetic(SynthConfig(n_gateways=3, users_per_gateway=5, extra_links=rng.randint(0, 10), seed=seed))
    order = rng.sample(sorted(s.wallets), rng.randint(1, len(s.wallets) - 1))
    rec = removal_analysis(s, order)
    assert all(b <= a for a, b in zip((rec.initial_lcc,) + rec.lcc_sizes, rec.lcc_sizes))
    assert all(r >= 0.5 for r in rec.rsl_factors)


def test_barbell_removal_rows():
    s = simple_graph(barbell(4))
    rec = removal_analysis(s, ["a00", "b00"])
    assert rec.rows() == [(1, 4), (2, 3)]


# stuck credit -------------------------------------------------------------------


def withdraw_attempts(s, gateway, wallet):
    """Every payment from ``wallet`` to another customer of ``gateway``."""
    peers = sorted({l.other(gateway) for l in s.links_by_wallet[gateway]} - {wallet})
    for p in peers:
        with pytest.raises(NoPath):
            execute_transaction(s, TxIntent(wallet, p, D("0.01"), "USD"))


def test_gateway_side_flags_block_everything():
    s = normalize_flags(snap([link("G", "a", 10, nr_d=True), link("G", "b", 20, nr_d=True)], gateways={"G"}))
    rep = stuck_credit(s, "G", RATES)
    assert rep.wallets_no_rippling == ("a", "b") and rep.wallets_rippling_no_tx == ()
    assert rep.stuck_total == D(30)
    withdraw_attempts(s, "G", "a")
    withdraw_attempts(s, "G", "b")


def test_saturated_gateway_links():
    s = normalize_flags(snap([link("G", "w", 50), link("G", "p", 10, 10), link("q", "G", 0)], gateways={"G"}))
    rep = stuck_credit(s, "G", RATES)
    # p can still push its 10 out through G's unbounded link to w
    assert rep.wallets_rippling_no_tx == ("w",) and rep.wallets_no_rippling == ()
    assert rep.per_wallet == {"w": D(50)} and rep.stuck_total == D(50)


def test_partial_capacity_is_stuck():
    s = normalize_flags(snap([link("G", "w", 50), link("G", "p", 0, 49)], gateways={"G"}, default_ripple={"G"}))
    assert stuck_credit(s, "G", RATES).wallets_rippling_no_tx == ("w",)


def test_healthy_gateway():
    s = normalize_flags(snap([link("G", "a", 10), link("G", "b", 20)], gateways={"G"}, default_ripple={"G"}))
    rep = stuck_credit(s, "G", RATES)
    assert rep.wallets_no_rippling == () and rep.wallets_rippling_no_tx == () and rep.stuck_total == 0


def test_stuck_requires_gateway():
    s = snap([link("G", "a", 10)])
    with pytest.raises(NotAGateway):
        stuck_credit(s, "G", RATES)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_stuck_sets_disjoint(seed):
    s = normalize_flags(generate_synthetic(SynthConfig(n_gateways=2, users_per_gateway=6, inter_gateway_links=1,
                                                       ripple_policy=0.5, limit_multiple=D(1), seed=seed)))
    for g in sorted(s.gateways):
        rep = stuck_credit(s, g, RATES)
        assert not set(rep.wallets_no_rippling) & set(rep.wallets_rippling_no_tx)
        for w in rep.wallets_no_rippling + rep.wallets_rippling_no_tx:
            assert any(l.debtor == g and l.balance > 0 for l in s.links_by_wallet[w])


# credit acquisition -------------------------------------------------------------------


def acquisition_log():
    offers = [ExchangeOffer("o", "M", "USD", D(73), XRP, D(100), T0)]
    s = snap(
        [link("PR", "W", 0), link("PR", "M", 100), link("PR", "X", 50)],
        offers=offers,
        gateways={"PR"},
        default_ripple={"PR"},
        xrp={"W": 100},
    )
    s, circ = execute_circular_xrp(s, "W", D(10), "USD", "PR", timestamp=T0 + timedelta(hours=1))
    s, inbound = execute_transaction(s, TxIntent("X", "W", D(10), "USD"), timestamp=T0 + timedelta(hours=2))
    return [circ, inbound]


def test_acquisition_classes():
    log = acquisition_log()
    rep = credit_acquisition(log, {"W"}, "PR", RATES, (T0, T0 + timedelta(days=1)))
    assert rep.counts == {INBOUND: 1, CIRCULAR: 1}
    assert rep.simple_rate == {"USD/XRP": D("0.73")} and rep.weighted_rate == {"USD/XRP": D("0.73")}
    assert rep.received_value[INBOUND] == D(10) and rep.received_value[CIRCULAR] == D("7.3")
    assert rep.paid_by_currency == {XRP: D(10)}


def test_acquisition_window_bounds():
    log = acquisition_log()
    rep = credit_acquisition(log, {"W"}, "PR", RATES, (T0, T0 + timedelta(hours=2)))
    assert rep.counts == {INBOUND: 0, CIRCULAR: 1}
    with pytest.raises(EmptyWindow):
        credit_acquisition(log, {"W"}, "PR", RATES, (T0, T0))
    with pytest.raises(EmptyWindow):
        credit_acquisition(log, {"W"}, "PR", RATES, (T0 + timedelta(days=2), T0 + timedelta(days=3)))
