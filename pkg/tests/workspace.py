"""A throwaway directory holding one input file of every kind the CLI reads,
plus the argument vectors that exercise each subcommand on them."""

from __future__ import annotations

import json
import random
import shutil
from datetime import timedelta
from pathlib import Path

from builders import D, T0, link, snap
from creditnet.cli import main
from creditnet.files import OfferObservation, save_offer_history, save_rate_series, save_snapshot, save_txlog
from creditnet.ledger import XRP, ExchangeOffer
from creditnet.rates import RateSeries
from creditnet.settlement import execute_circular_xrp

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
SUBCOMMANDS = [
    "validate", "synth", "settle", "metrics", "communities", "motifs", "mixing", "liquidity", "rippling-risk",
    "resilience", "stuck-credit", "acquisition", "classify-tx", "stale-offers",
]
WINDOW = ["--start", "2017-08-31T00:00:00Z", "--end", "2017-09-01T00:00:00Z"]


def stale_market(root: Path) -> None:
    offer = ExchangeOffer("stale", "M", "BTC", D(1), XRP, D(10_000), T0)
    takers = ["t1", "t2"]
    s = snap(
        [link("PR", "M", 1, currency="BTC")] + [link("PR", t, 0, currency="BTC") for t in takers],
        offers=[offer],
        gateways={"PR"},
        default_ripple={"PR"},
        xrp={t: 10_000 for t in takers},
    )
    txs = []
    for i, t in enumerate(takers):
        s, tx = execute_circular_xrp(s, t, D(500), "BTC", "PR", timestamp=T0 + timedelta(hours=i + 1))
        txs.append(tx)
    save_txlog(txs, root / "btc_log.jsonl")
    save_offer_history([OfferObservation(T0, offer)], root / "offers.jsonl")
    rows = [(T0, XRP, "USD", D("0.2")), (T0, "BTC", "USD", D(4000))]
    save_rate_series(RateSeries.from_rows(rows), root / "series.csv")
    save_snapshot(s, root / "btc_snapshot.jsonl")


def build(root: Path) -> dict[str, Path]:
    root.mkdir(parents=True, exist_ok=True)
    synth_dir = root / "synth"
    assert main([
        "synth", "--out", str(synth_dir), "--n-gateways", "3", "--users-per-gateway", "8",
        "--currencies", "USD,EUR", "--limit-multiple", "3", "--extra-links", "10", "--market-makers", "2",
        "--seed", "7",
    ]) == 0
    s_path, reg = synth_dir / "snapshot.jsonl", synth_dir / "registry.txt"
    shutil.copy(FIXTURES / "rates.csv", root / "rates.csv")

    users = sorted(
        json.loads(line)["id"] for line in s_path.read_text().splitlines() if '"kind":"wallet"' in line
    )
    users = [u for u in users if u.startswith("u")]
    rng = random.Random(3)
    intents = []
    for i in range(30):
        a, b = rng.sample(users, 2)
        intents.append({"sender": a, "receiver": b, "amount": str(rng.randint(1, 50)), "currency": "USD",
                        "timestamp": f"2017-08-31T{i // 60:02d}:{i % 60:02d}:00Z"})
    (root / "intents.jsonl").write_text("".join(json.dumps(x) + "\n" for x in intents))
    settle_dir = root / "settled"
    assert main(["settle", "--snapshot", str(s_path), "--gateways", str(reg), "--intents",
                 str(root / "intents.jsonl"), "--out", str(settle_dir)]) == 0
    stale_market(root)
    return {
        "snapshot": s_path,
        "registry": reg,
        "rates": root / "rates.csv",
        "intents": root / "intents.jsonl",
        "txlog": settle_dir / "transactions.jsonl",
        "victims": ",".join(users[:6]),
    }


def commands(ws: dict, root: Path) -> dict[str, list[str]]:
    """Subcommand -> argv without ``--out``."""
    s = ["--snapshot", str(ws["snapshot"]), "--gateways", str(ws["registry"])]
    return {
        "validate": ["validate", *s],
        "synth": ["synth", "--n-gateways", "2", "--users-per-gateway", "5", "--inter-gateway-links", "1", "--seed", "4"],
        "settle": ["settle", *s, "--intents", str(ws["intents"])],
        "metrics": ["metrics", *s],
        "communities": ["communities", *s, "--seed", "2"],
        "motifs": ["motifs", *s],
        "mixing": ["mixing", *s, "--lcc"],
        "liquidity": ["liquidity", *s, "--rates", str(ws["rates"]), "--pairs", "40", "--seed", "5", "--threads", "2"],
        "rippling-risk": ["rippling-risk", *s, "--rates", str(ws["rates"])],
        "resilience": ["resilience", *s, "--k", "5"],
        "stuck-credit": ["stuck-credit", *s, "--gateway", "g000", "--rates", str(ws["rates"])],
        "acquisition": ["acquisition", "--txlog", str(ws["txlog"]), "--victims", ws["victims"], "--gateway", "g000",
                        "--rates", str(ws["rates"]), *WINDOW],
        "classify-tx": ["classify-tx", *s, "--txlog", str(ws["txlog"])],
        "stale-offers": ["stale-offers", "--txlog", str(root / "btc_log.jsonl"), "--offers", str(root / "offers.jsonl"),
                         "--rates", str(root / "series.csv"), "--pair", "XRP,BTC", *WINDOW],
    }
