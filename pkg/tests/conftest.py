import random

import pytest

from pisces.group import GroupParams
from pisces.platform import Platform
from pisces.scenario import ScenarioRunner

ASSETS = ["USD", "BTC", "ETH", "SOL"]
PRICES = [1, 1600, 120, 7]

ALICE = {
    "seed": 7,
    "assets": ["USD", "BTC"],
    "prices": [[1, 1600], [1, 2000]],
    "au": 2026,
    "actions": [
        {"op": "join", "user": "alice"},
        {"op": "deposit", "user": "alice", "asset": "USD", "amount": 100000},
        {"op": "exchange", "user": "alice", "from": "USD", "amount": 80000, "to": "BTC"},
        {"op": "publish"},
        {"op": "withdraw", "user": "alice", "asset": "BTC", "amount": 30, "address": "btc:alice"},
        {"op": "file", "user": "alice"},
    ],
}


@pytest.fixture(scope="session")
def params():
    return GroupParams.default()


@pytest.fixture(scope="session")
def base_platform():
    """Keys and precomputed tables shared by every fresh platform below."""
    return Platform.setup(ASSETS, PRICES, seed=11, au=2026)


def fresh(base, prices=PRICES, seed=0, **kw):
    p = Platform(base.keys, base.pub, au=base.au, rng=random.Random(seed), **kw)
    p._publish(0, prices)
    return p


@pytest.fixture
def platform(base_platform):
    return fresh(base_platform)


@pytest.fixture
def runner(platform):
    return ScenarioRunner(platform, seed=3)


@pytest.fixture
def funded(runner):
    """Alice registered with 100000 USD and 50 BTC."""
    runner.run([
        {"op": "join", "user": "alice"},
        {"op": "deposit", "user": "alice", "asset": "USD", "amount": 100000},
        {"op": "deposit", "user": "alice", "asset": "BTC", "amount": 50},
    ])
    return runner


# -- acceptance report ---------------------------------------------------------------

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
