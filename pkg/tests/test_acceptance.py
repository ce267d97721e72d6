"""The ten acceptance criteria, each at its stated tolerance.

Every test records one ``criterion N PASS|FAIL`` line; the lines are printed
together at the end of the run (and immediately, when run with ``-s``).
"""

import contextlib
import gc
import random
import statistics
import subprocess
import sys
import time
from pathlib import Path

import pytest

from pisces.adversary import GENERATORS, AdversaryEnv, run_attack
from pisces.bench import Bench, run_bench
from pisces.client import Client
from pisces.oracle import ShadowExchange, diff_docs, diff_outcomes, oracle_compliance, oracle_overdraft, random_actions
from pisces.platform import FlowEntry, authority_verify, liquidity_check
from pisces.protocol import ExchangeRequest, ProtocolError, field_tags
from pisces.scenario import ScenarioRunner, run_scenario
from pisces.server import open_or_setup, serve_in_thread
from pisces.user import UserWallet

from conftest import ACCEPTANCE, ALICE, PRICES, fresh

SCENARIOS = 1000
PAPER_MS = {"join": (9, 7), "deposit": (11, 14), "exchange": (46, 88), "withdraw": (37, 62)}
KIB = 1024


@contextlib.contextmanager
def criterion(n, title):
    facts = {}
    start = time.perf_counter()
    ok = False
    try:
        yield facts
        ok = True
    finally:
        facts["runtime_s"] = f"{time.perf_counter() - start:.1f}"
        detail = " ".join(f"{k}={v}" for k, v in facts.items())
        line = f"criterion {n} {'PASS' if ok else 'FAIL'} {title} {detail}"
        ACCEPTANCE[n] = line
        print(line)


def test_1_worked_example():
    with criterion(1, "worked-example") as f:
        t = time.perf_counter()
        result = run_scenario(ALICE, fsync=False)
        elapsed = time.perf_counter() - t
        doc = result.wallets["alice"].docs[-1]
        f.update(cp1=doc.cp1, cp2=doc.cp2)
        assert result.unexpected == [] and all(o["status"] == "ok" for o in result.outcomes)
        assert authority_verify(result.platform.pub, doc, ALICE["au"])
        assert (doc.cp1, doc.cp2) == (48000, 60000)
        assert elapsed < 5


@pytest.fixture(scope="module")
def bench_results():
    return run_bench((4, 64, 256), iterations=100, seed=0)


def test_2_constant_cost():
    with criterion(2, "constant-cost") as f:
        t = time.perf_counter()
        benches = {n: Bench(n, seed=1) for n in (4, 64, 256)}
        reqs = {n: b.exchange_request() for n, b in benches.items()}
        sizes = {n: len(r.to_bytes()) for n, r in reqs.items()}
        f["request_bytes"] = ",".join(str(sizes[n]) for n in benches)
        for n, b in benches.items():  # warm-up
            for _ in range(3):
                b.time_exchange_verify(reqs[n])
        samples = {n: [] for n in benches}
        order = list(benches)
        rng = random.Random(0)
        gc.disable()
        try:
            for _ in range(60):
                rng.shuffle(order)
                for n in order:
                    samples[n].append(benches[n].time_exchange_verify(reqs[n]))
        finally:
            gc.enable()
        medians = {n: statistics.median(v) for n, v in samples.items()}
        spread = max(medians.values()) / min(medians.values()) - 1
        f["verify_median_ms"] = ",".join(f"{medians[n]:.2f}" for n in benches)
        f["spread_pct"] = f"{100 * spread:.2f}"
        assert len(set(sizes.values())) == 1
        assert len({tuple(field_tags(r.to_bytes())) for r in reqs.values()}) == 1
        assert spread <= 0.05
        assert time.perf_counter() - t < 120


def test_3_performance(bench_results):
    with criterion(3, "performance") as f:
        worst = 0.0
        for n, ops in bench_results.items():
            for op, s in ops.items():
                user, plat = s["user_mean_ms"], s["platform_mean_ms"]
                worst = max(worst, user, plat)
                if op in PAPER_MS:
                    pu, pp = PAPER_MS[op]
                    assert user <= 10 * pu and plat <= 10 * pp, (n, op, user, plat)
        ex = bench_results[256]["exchange"]
        f.update(exchange_user_ms=f"{ex['user_mean_ms']:.1f}", exchange_platform_ms=f"{ex['platform_mean_ms']:.1f}",
                 worst_ms=f"{worst:.1f}")
        assert worst < 1000


def test_4_communication(bench_results):
    with criterion(4, "communication") as f:
        largest = max(s["transcript_bytes"] for ops in bench_results.values() for s in ops.values())
        ex_sizes = {size for ops in bench_results.values() for size in ops["exchange"]["request_sizes"]}
        f.update(max_transcript_bytes=largest, exchange_request_bytes=",".join(map(str, sorted(ex_sizes))))
        assert largest <= 64 * KIB
        assert len(ex_sizes) == 1
        assert max(ex_sizes) <= 4 * 12_000


def _scenario(base, seed, users, steps, file_all):
    rng = random.Random(seed)
    actions = random_actions(rng, users, 4, PRICES, steps=steps, file_all=file_all)
    runner = ScenarioRunner(fresh(base, PRICES, seed), seed)
    shadow = ShadowExchange(range(4), PRICES, base.au)
    outcomes = runner.run(actions)
    expected = [shadow.apply(a) for a in actions]
    return runner, shadow, outcomes, expected


def test_5_overdraft(base_platform):
    with criterion(5, "overdraft") as f:
        t = time.perf_counter()
        names = sorted(GENERATORS)
        violations, accepted, attacks, failed = [], 0, {n: 0 for n in names}, []
        for seed in range(SCENARIOS):
            runner, _, outcomes, _ = _scenario(base_platform, seed, ["u0"], 2, False)
            accepted += sum(o["status"] == "ok" for o in outcomes)
            if seed % 10 == 0:
                name = names[(seed // 10) % len(names)]
                result = run_attack(runner.platform, GENERATORS[name](AdversaryEnv(runner)))
                attacks[name] += 1
                if not result.passed:
                    failed.append(result)
            v = oracle_overdraft(runner.events)
            if v is not None:
                violations.append((seed, v))
        elapsed = time.perf_counter() - t
        f.update(scenarios=SCENARIOS, accepted_tx=accepted, violations=len(violations),
                 generators=len(names), attacks=sum(attacks.values()), attack_failures=len(failed))
        assert not violations, violations[:3]
        assert not failed, failed[:3]
        assert len(names) >= 6 and min(attacks.values()) >= 1
        assert elapsed < 300


def test_6_compliance(base_platform):
    with criterion(6, "compliance") as f:
        t = time.perf_counter()
        docs, mismatches = 0, []
        for seed in range(SCENARIOS):
            runner, shadow, outcomes, expected = _scenario(base_platform, 10_000 + seed, ["u0"], 2, True)
            diffs = diff_docs(runner.docs, shadow.docs) + diff_outcomes(outcomes, expected)
            docs += len(runner.docs)
            if diffs:
                mismatches.append((seed, diffs))
        elapsed = time.perf_counter() - t
        f.update(scenarios=SCENARIOS, docs=docs, mismatches=len(mismatches))
        assert oracle_compliance([]) == (0, 0)
        assert not mismatches, mismatches[:3]
        assert docs == SCENARIOS
        assert elapsed < 300


def _replay(client, requests) -> list:
    codes = []
    for data in requests:
        try:
            client.submit_raw(data)
            codes.append("accepted")
        except ProtocolError as exc:
            codes.append(exc.code)
    return codes


def test_7_double_spend(tmp_path):
    with criterion(7, "double-spend") as f:
        state = tmp_path / "state"
        config = {"assets": ["USD", "BTC"], "prices": [[1, 1600]], "au": 2026, "seed": 3}
        srv, thread = serve_in_thread(open_or_setup(state, config))
        accepted = []
        with Client(port=srv.port) as c:
            w = UserWallet(c.pubkey(), rng=random.Random(1))
            w.update_prices(c.feed().epoch, c.feed().credentials)
            for build in (lambda: w.build_join(),
                          lambda: w.build_deposit(0, 5000, c.transfer(0, 5000, "bank")),
                          lambda: w.build_exchange(w.pick_asset(0, 3200), 1, 3200),
                          lambda: w.build_withdraw(w.pick_asset(1, 1), 1, "btc:w"),
                          lambda: w.build_file(2026)):
                req, pending = build()
                w.finalize(pending, c.submit(req))
                accepted.append(req.to_bytes())
            before = _replay(c, accepted)
        srv.shutdown()
        srv.server_close()
        thread.join()

        srv, thread = serve_in_thread(open_or_setup(state, None))
        try:
            with Client(port=srv.port) as c:
                after = _replay(c, accepted)
                req, pending = w.build_exchange(w.pick_asset(0, 1600), 1, 1600)
                w.finalize(pending, c.submit(req))
        finally:
            srv.shutdown()
            srv.server_close()
        f.update(replays=len(accepted), before_restart=",".join(before), after_restart=",".join(after))
        assert before == ["already_registered"] + ["double_spend"] * 4
        assert after == before


def test_8_crypto_units():
    with criterion(8, "crypto-units") as f:
        here = Path(__file__).parent
        files = [str(here / name) for name in ("test_group.py", "test_commit.py", "test_ps.py", "test_zk.py")]
        proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *files],
                              capture_output=True, text=True, cwd=here.parent)
        f["summary"] = proc.stdout.strip().splitlines()[-1].strip("= ").replace(" ", "_")
        assert proc.returncode == 0, proc.stdout[-2000:]


def test_9_transcript_shape(funded):
    with criterion(9, "transcript-shape") as f:
        funded.run([{"op": "join", "user": "bob"},
                    {"op": "deposit", "user": "bob", "asset": "SOL", "amount": 4_000_000}])
        reqs = []
        for user, src, k, dst in (("alice", 0, 1600, 1), ("alice", 1, 3, 2), ("bob", 3, 120, 2),
                                  ("bob", 3, 3_999_840, 0)):
            w = funded.wallets[user]
            req, pending = w.build_exchange(w.pick_asset(src, k), dst, k)
            w.abort(pending)
            reqs.append(req.to_bytes())
        p = funded.platform
        p.view_log = []
        funded.step({"op": "exchange", "user": "alice", "from": "USD", "amount": 1600, "to": "BTC"})
        tx, seen = p.view_log[-1]
        f.update(pairs=len(reqs), length=len(reqs[0]), observed=",".join(sorted(seen)))
        assert len({len(d) for d in reqs}) == 1
        assert len({tuple(field_tags(d)) for d in reqs}) == 1
        assert tx == "exchange" and seen == set(ExchangeRequest.field_names()) | {"tag"}


def test_10_liquidity(funded):
    with criterion(10, "liquidity") as f:
        day = 86_400
        passing = liquidity_check([FlowEntry(0, 0, 100), FlowEntry(day, 0, -30)], {}, ["BTC"], now=2 * day)
        failing = liquidity_check([FlowEntry(0, 0, 100), FlowEntry(day, 0, -130)], {0: 20}, ["BTC"], now=2 * day)
        empty = liquidity_check([], {}, ["USD"], now=0)
        funded.step({"op": "advance", "seconds": day})
        funded.step({"op": "withdraw", "user": "alice", "asset": "BTC", "amount": 20})
        live_pass = funded.platform.check()
        funded.step({"op": "withdraw", "user": "alice", "asset": "BTC", "amount": 30})
        live_fail = funded.platform.check()
        btc = live_fail.coins[1]
        f.update(constructed_pass=passing.passed, constructed_fail=",".join(failing.failing),
                 live_pass=live_pass.passed, live_fail=",".join(live_fail.failing), btc=f"{btc.reserve}/{btc.outflow}")
        assert passing.passed and passing.coins[0].reserve == 70 and passing.coins[0].outflow == 30
        assert not failing.passed and failing.failing == ["BTC"]
        assert empty.passed
        assert live_pass.passed and (live_pass.coins[1].reserve, live_pass.coins[1].outflow) == (30, 20)
        assert live_fail.failing == ["BTC"] and (btc.reserve, btc.outflow) == (0, 50)
