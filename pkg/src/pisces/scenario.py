"""Deterministic multi-user scenario runner against an in-process platform.

Scenario JSON::

    {
      "seed": 7,
      "assets": ["USD", "BTC"],
      "prices": [[1, 1600], [1, 2000]],      # one row per epoch
      "au": 2026,                            # audit period for file
      "floats": {"BTC": 0},                  # optional initial reserves
      "actions": [
        {"op": "join", "user": "alice"},
        {"op": "deposit", "user": "alice", "asset": "USD", "amount": 100000},
        {"op": "exchange", "user": "alice", "from": "USD", "amount": 80000, "to": "BTC"},
        {"op": "publish"},                   # next row of "prices", or "prices": [...]
        {"op": "withdraw", "user": "alice", "asset": "BTC", "amount": 30, "address": "btc:alice"},
        {"op": "file", "user": "alice"},
        {"op": "advance", "seconds": 86400},
        {"op": "check"}
      ]
    }

Any action may carry ``"expect": "<error code>"`` (or ``"ok"``); a mismatch is
reported in the outcome as ``"unexpected": true``.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .platform import Platform, authority_verify
from .protocol import ProtocolError
from .user import UserWallet


@dataclass
class ScenarioResult:
    outcomes: list
    events: list = field(default_factory=list)
    docs: list = field(default_factory=list)
    platform: Platform | None = None
    wallets: dict = field(default_factory=dict)

    @property
    def unexpected(self) -> list:
        return [o for o in self.outcomes if o.get("unexpected")]


def _lot(rec) -> dict:
    return {"id": f"{rec.aid:x}", "name": rec.name, "amt": rec.amt, "price": rec.price}


class ScenarioRunner:
    """Drives wallets and a platform through a list of actions.

    Every accepted transaction also yields a plaintext event (what the user
    spent and what the platform signed) for the overdraft oracle.
    """

    def __init__(self, platform: Platform, seed=0, schedule=None, au: int | None = None):
        self.platform = platform
        self.seed = seed
        self.schedule = [list(row) for row in (schedule or [])]
        self.au = platform.au if au is None else au
        self.wallets: dict[str, UserWallet] = {}
        self.events: list = []
        self.docs: list = []
        self.last_request = None

    def wallet(self, user: str) -> UserWallet:
        w = self.wallets.get(user)
        if w is None:
            w = UserWallet(self.platform.pub, rng=random.Random(f"{self.seed}/{user}"))
            feed = self.platform.feed
            w.update_prices(feed.epoch, feed.credentials)
            self.wallets[user] = w
        return w

    def _asset(self, name) -> int:
        try:
            return self.platform.pub.asset_index(name)
        except KeyError as exc:
            raise ProtocolError("unknown_asset", str(exc.args[0])) from None

    def _submit(self, w: UserWallet, built):
        req, pending = built
        try:
            resp = self.platform.handle(req)
        except ProtocolError:
            w.abort(pending)
            raise
        self.last_request = req
        return pending, w.finalize(pending, resp)

    def run(self, actions) -> list:
        return [self.step(a) for a in actions]

    def step(self, action: dict) -> dict:
        op = action["op"]
        handler = getattr(self, f"_do_{op}", None)
        if handler is None:
            raise ValueError(f"unknown scenario op {op!r}")
        out = {"op": op}
        if "user" in action:
            out["user"] = action["user"]
        try:
            out.update(handler(action))
            out["status"] = "ok"
        except ProtocolError as exc:
            out.update(status="error", code=exc.code, message=exc.message)
        expect = action.get("expect")
        if expect is not None and expect != out.get("code", "ok"):
            out["unexpected"] = True
        return out

    # -- actions ---------------------------------------------------------------

    def _do_join(self, a):
        w = self.wallet(a["user"])
        self._submit(w, w.build_join())
        return {}

    def _do_deposit(self, a):
        w = self.wallet(a["user"])
        name, amount = self._asset(a["asset"]), int(a["amount"])
        w._require_registration()
        ref = self.platform.settle_incoming(name, amount, a.get("source", a["user"]))
        _, recs = self._submit(w, w.build_deposit(name, amount, ref))
        self.events.append({"type": "deposit", "user": a["user"], "new": [_lot(recs[0])],
                            "name": name, "amt": amount})
        return {"ref": ref, "amount": amount}

    def _do_exchange(self, a):
        w = self.wallet(a["user"])
        src, dst, k = self._asset(a["from"]), self._asset(a["to"]), int(a["amount"])
        w._require_registration()
        asset = w.pick_asset(src, k)
        pending, recs = self._submit(w, w.build_exchange(asset, dst, k))
        info = pending.info
        self.events.append({"type": "exchange", "user": a["user"], "spent": _lot(asset), "amt": k,
                            "sell_price": info["sell_price"], "target": dst, "received": info["received"],
                            "target_price": info["target_price"], "new": [_lot(r) for r in recs[1:]]})
        return {"received": info["received"]}

    def _do_withdraw(self, a):
        w = self.wallet(a["user"])
        name, k = self._asset(a["asset"]), int(a["amount"])
        address = a.get("address", f"{a['user']}:payout")
        w._require_registration()
        asset = w.pick_asset(name, k)
        pending, recs = self._submit(w, w.build_withdraw(asset, k, address))
        receipts = self.platform.receipts(address)
        received = bool(receipts) and receipts[-1].name == name and receipts[-1].amount == k
        self.events.append({"type": "withdraw", "user": a["user"], "spent": _lot(asset), "amt": k,
                            "sell_price": pending.info["sell_price"], "new": [_lot(recs[1])]})
        return {"amount": k, "receipt": received}

    def _do_file(self, a):
        w = self.wallet(a["user"])
        au = int(a.get("au", self.au))
        _, recs = self._submit(w, w.build_file(au))
        doc = recs[1]
        verified = authority_verify(self.platform.pub, doc, au)
        self.docs.append({"user": a["user"], "cp1": doc.cp1, "cp2": doc.cp2, "au": au, "verified": verified})
        self.events.append({"type": "file", "user": a["user"]})
        return {"cp1": doc.cp1, "cp2": doc.cp2, "au": au, "verified": verified}

    def _do_publish(self, a):
        prices = a.get("prices")
        if prices is None:
            nxt = self.platform.epoch + 1
            if nxt >= len(self.schedule):
                raise ProtocolError("no_prices", f"no price row for epoch {nxt}")
            prices = self.schedule[nxt]
        feed = self.platform.publish_prices(prices)
        for w in self.wallets.values():
            w.update_prices(feed.epoch, feed.credentials)
        return {"epoch": feed.epoch}

    def _do_advance(self, a):
        self.platform.advance_clock(int(a["seconds"]))
        return {"now": self.platform.clock}

    def _do_check(self, a):
        report = self.platform.check(int(a.get("window", 30 * 86_400)))
        return {"passed": report.passed, "failing": ",".join(report.failing)}


def load_scenario(path) -> dict:
    return json.loads(Path(path).read_text())


def run_scenario(scen: dict, state_dir=None, wallet_dir=None, fsync: bool = True) -> ScenarioResult:
    """Set up a platform from ``scen`` and run its actions."""
    assets = scen["assets"]
    prices = scen["prices"]
    if prices and not isinstance(prices[0], list):
        prices = [prices]
    floats = {assets.index(k) if isinstance(k, str) else int(k): v for k, v in scen.get("floats", {}).items()}
    seed = scen.get("seed", 0)
    platform = Platform.setup(assets, prices[0], seed=seed, au=scen.get("au", 0), floats=floats,
                              state_dir=state_dir, fsync=fsync)
    runner = ScenarioRunner(platform, seed, prices)
    outcomes = runner.run(scen["actions"])
    if wallet_dir is not None:
        wallet_dir = Path(wallet_dir)
        wallet_dir.mkdir(parents=True, exist_ok=True)
        for user, w in sorted(runner.wallets.items()):
            (wallet_dir / f"{user}.json").write_text(w.to_json())
    return ScenarioResult(outcomes, runner.events, runner.docs, platform, runner.wallets)


__all__ = ["ScenarioResult", "ScenarioRunner", "load_scenario", "run_scenario"]
