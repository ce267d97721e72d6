"""Per-transaction timing and transcript sizes.

Each iteration runs a fresh user through join, deposit, exchange, withdraw
and file with randomly chosen assets and amounts.  User time is request
building plus response processing; platform time is ``handle``.
"""

from __future__ import annotations

import random
import statistics
import time
from dataclasses import dataclass, field
from math import gcd

from .platform import Platform
from .protocol import TX_EXCHANGE, context
from .user import UserWallet
from .zk import verify

OPS = ("join", "deposit", "exchange", "withdraw", "file")


@dataclass
class OpStats:
    user_ms: list = field(default_factory=list)
    platform_ms: list = field(default_factory=list)
    request_bytes: set = field(default_factory=set)
    response_bytes: set = field(default_factory=set)

    def summary(self) -> dict:
        return {
            "user_mean_ms": statistics.fmean(self.user_ms),
            "user_median_ms": statistics.median(self.user_ms),
            "platform_mean_ms": statistics.fmean(self.platform_ms),
            "platform_median_ms": statistics.median(self.platform_ms),
            "request_bytes": max(self.request_bytes),
            "response_bytes": max(self.response_bytes),
            "request_sizes": sorted(self.request_bytes),
            "transcript_bytes": max(self.request_bytes) + max(self.response_bytes),
        }


def bench_prices(n: int, rng: random.Random) -> list:
    return [1] + [rng.randrange(1, 5000) for _ in range(n - 1)]


class Bench:
    """A platform with ``n`` assets and a driver for full transaction cycles."""

    def __init__(self, n: int, seed: int = 0):
        self.n = n
        self.rng = random.Random(f"bench/{n}/{seed}")
        self.platform = Platform.setup(n, bench_prices(n, self.rng), seed=seed)
        self.stats = {op: OpStats() for op in OPS}
        self._users = 0

    def _run(self, wallet, built):
        req, pending = built
        data = req.to_bytes()
        t2 = time.perf_counter()
        resp = self.platform.handle(req)
        t3 = time.perf_counter()
        recs = wallet.finalize(pending, resp)
        t4 = time.perf_counter()
        return data, resp.to_bytes(), recs, (t2, t3, t4)

    def _timed(self, op, wallet, build, *args):
        t0 = time.perf_counter()
        data, resp, recs, (t2, t3, t4) = self._run(wallet, build(*args))
        s = self.stats[op]
        s.user_ms.append(((t2 - t0) + (t4 - t3)) * 1000)
        s.platform_ms.append((t3 - t2) * 1000)
        s.request_bytes.add(len(data))
        s.response_bytes.add(len(resp))
        return recs

    def cycle(self):
        """One user through all five transactions."""
        rng, p = self.rng, self.platform
        self._users += 1
        w = UserWallet(p.pub, rng=random.Random(rng.getrandbits(64)))
        w.update_prices(p.feed.epoch, p.feed.credentials)
        self._timed("join", w, w.build_join)

        i, j = rng.randrange(self.n), rng.randrange(self.n)
        pi, pj = p.prices[i], p.prices[j]
        step = pj // gcd(pi, pj)
        k = step * rng.randrange(1, 50)
        amount = k + rng.randrange(1, 10_000)
        ref = p.settle_incoming(i, amount, f"bench-{self._users}")
        self._timed("deposit", w, w.build_deposit, i, amount, ref)

        self._timed("exchange", w, w.build_exchange, w.pick_asset(i, k), j, k)
        got = w.pick_asset(j, 1)
        self._timed("withdraw", w, w.build_withdraw, got, rng.randrange(0, got.amt + 1), f"bench:{self._users}")
        self._timed("file", w, w.build_file, p.au)

    def exchange_request(self):
        """A fresh, unsubmitted exchange request from a newly funded user."""
        p = self.platform
        w = UserWallet(p.pub, rng=random.Random(self.rng.getrandbits(64)))
        w.update_prices(p.feed.epoch, p.feed.credentials)
        self._run(w, w.build_join())
        k = p.prices[self.n - 1]
        ref = p.settle_incoming(0, 10 * k, "verify")
        self._run(w, w.build_deposit(0, 10 * k, ref))
        req, _ = w.build_exchange(w.pick_asset(0, k), self.n - 1, k)
        return req

    def time_exchange_verify(self, req) -> float:
        """Milliseconds for one platform-side verification of ``req`` (no state change)."""
        p = self.platform
        t = time.perf_counter()
        ok = verify(req.statement(p.pub), req.proof, context(p.pub, TX_EXCHANGE, req.epoch))
        elapsed = (time.perf_counter() - t) * 1000
        if not ok:
            raise AssertionError("benchmark exchange request failed to verify")
        return elapsed


def run_bench(ns=(4, 64, 256), iterations: int = 100, seed: int = 0, progress=None) -> dict:
    """``{n: {op: summary}}`` over ``iterations`` cycles per asset count."""
    results = {}
    for n in ns:
        b = Bench(n, seed)
        b.cycle()  # warm caches outside the measurement
        b.stats = {op: OpStats() for op in OPS}
        for it in range(iterations):
            b.cycle()
            if progress is not None:
                progress(n, it + 1)
        results[n] = {op: s.summary() for op, s in b.stats.items()}
    return results


def format_results(results: dict) -> list:
    """logfmt lines, one per (n, op)."""
    lines = []
    for n, ops in results.items():
        for op, s in ops.items():
            sizes = ",".join(str(x) for x in s["request_sizes"])
            lines.append(
                f"bench n={n} op={op} user_mean_ms={s['user_mean_ms']:.2f} user_median_ms={s['user_median_ms']:.2f} "
                f"platform_mean_ms={s['platform_mean_ms']:.2f} platform_median_ms={s['platform_median_ms']:.2f} "
                f"request_bytes={s['request_bytes']} response_bytes={s['response_bytes']} "
                f"transcript_bytes={s['transcript_bytes']} request_sizes={sizes}")
    return lines
