from pathlib import Path

import pytest

from creditnet.files import load_registry, load_snapshot

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def g13():
    return load_snapshot(FIXTURES / "g13-shape.jsonl", load_registry(FIXTURES / "g13-shape.registry"))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        verdict, title = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {title}")
