import json
import random

import pytest

from pisces.oracle import ShadowExchange, diff_docs, diff_outcomes, oracle_overdraft, random_actions
from pisces.protocol import ExchangeRequest, field_tags
from pisces.scenario import ScenarioRunner, load_scenario, run_scenario

from conftest import ALICE, fresh


def test_alice_json(tmp_path):
    path = tmp_path / "alice.json"
    path.write_text(json.dumps(ALICE))
    result = run_scenario(load_scenario(path), fsync=False)
    assert [o["status"] for o in result.outcomes] == ["ok"] * 6
    assert result.outcomes[-1]["cp1"] == 48000 and result.outcomes[-1]["cp2"] == 60000


def _files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_fixed_seed_is_byte_identical(tmp_path):
    spec = dict(ALICE, actions=ALICE["actions"] + [{"op": "advance", "seconds": 86400}, {"op": "check"}])
    runs = []
    for n in range(2):
        root = tmp_path / f"run{n}"
        result = run_scenario(spec, state_dir=root / "state", wallet_dir=root / "wallets", fsync=False)
        runs.append((_files(root), result.outcomes))
    assert runs[0] == runs[1]
    assert {"state/spent.log", "state/keys.bin", "wallets/alice.json"} <= set(runs[0][0])


def test_expect_marks_surprises():
    spec = dict(ALICE, actions=[{"op": "join", "user": "a"}, {"op": "join", "user": "a", "expect": "ok"},
                                {"op": "exchange", "user": "a", "from": "USD", "to": "BTC", "amount": 1,
                                 "expect": "insufficient_balance"}])
    result = run_scenario(spec, fsync=False)
    assert [o.get("unexpected", False) for o in result.outcomes] == [False, True, False]
    with pytest.raises(ValueError):
        ScenarioRunner(result.platform).step({"op": "dance"})


def test_unknown_asset_and_missing_schedule(runner):
    assert runner.step({"op": "deposit", "user": "a", "asset": "DOGE", "amount": 1})["code"] == "unknown_asset"
    assert runner.step({"op": "publish"})["code"] == "no_prices"


def test_random_twenty_tx_equivalence(base_platform):
    rng = random.Random(2024)
    prices = [1, 1600, 120, 7]
    users = ["u0", "u1", "u2"]
    actions = random_actions(rng, users, 4, prices, steps=20 - 3 * len(users))
    runner = ScenarioRunner(fresh(base_platform, prices, 1), 1)
    shadow = ShadowExchange(range(4), prices, base_platform.au)
    outcomes = runner.run(actions)
    assert diff_outcomes(outcomes, [shadow.apply(a) for a in actions]) == []
    assert diff_docs(runner.docs, shadow.docs) == []
    assert oracle_overdraft(runner.events) is None


# -- transcript shape ------------------------------------------------------------------


def _exchange(runner, user, src, amount, dst):
    w = runner.wallets[user]
    req, pending = w.build_exchange(w.pick_asset(src, amount), dst, amount)
    w.abort(pending)
    return req


def test_publicly_consistent_exchanges_have_one_shape(funded):
    funded.run([{"op": "join", "user": "bob"},
                {"op": "deposit", "user": "bob", "asset": "SOL", "amount": 4_000_000}])
    reqs = [_exchange(funded, "alice", 0, 1600, 1), _exchange(funded, "alice", 1, 3, 2),
            _exchange(funded, "bob", 3, 120, 2), _exchange(funded, "bob", 3, 3_999_840, 0)]
    data = [r.to_bytes() for r in reqs]
    assert len({len(d) for d in data}) == 1
    assert len({tuple(field_tags(d)) for d in data}) == 1


def test_publicly_consistent_withdraws_and_files(funded):
    funded.run([{"op": "join", "user": "bob"}, {"op": "deposit", "user": "bob", "asset": "BTC", "amount": 7}])
    reqs = []
    for user in ("alice", "bob"):
        w = funded.wallets[user]
        req, pending = w.build_withdraw(w.pick_asset(1, 5), 5, "btc:x")
        w.abort(pending)
        reqs.append(req.to_bytes())
        req, pending = w.build_file(2026)
        w.abort(pending)
        reqs.append(req.to_bytes())
    assert len(reqs[0]) == len(reqs[2]) and field_tags(reqs[0]) == field_tags(reqs[2])
    assert len(reqs[1]) == len(reqs[3]) and field_tags(reqs[1]) == field_tags(reqs[3]) == [5, 1, 7, 2, 12, 8, 9]


def test_platform_view_of_exchange(funded):
    p = funded.platform
    p.view_log = []
    funded.run([{"op": "exchange", "user": "alice", "from": "USD", "amount": 1600, "to": "BTC"},
                {"op": "withdraw", "user": "alice", "asset": "BTC", "amount": 1}])
    (tx, seen), (tx2, seen2) = p.view_log
    assert tx == "exchange" and seen == {"tag", "epoch", "rid", "aid", "coms", "proof"}
    assert set(ExchangeRequest.field_names()) | {"tag"} == seen
    assert tx2 == "withdraw" and seen2 == {"tag", "epoch", "rid", "aid", "name", "amount", "address", "coms", "proof"}
