"""Plaintext oracles: a shadow exchange, the compliance function and the overdraft checker.

Nothing here touches the cryptographic modules; every value is recomputed
from plaintext so that agreement with the real system is evidence rather
than a tautology.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from math import gcd

NUMERAIRE = 0  # fiat unit of account, exempt from cost/gain accrual
AMOUNT_LIMIT = 1 << 32
SPENDING = ("exchange", "withdraw")


def oracle_compliance(events, user=None) -> tuple:
    """``(cp1, cp2)``: sums of ``amt*buy_price`` and ``amt*sell_price`` over spending events.

    Events are dicts with ``type``, ``name``, ``amt``, ``buy_price``,
    ``sell_price`` (and ``user`` when filtering).  The numeraire is exempt.
    """
    cp1 = cp2 = 0
    for e in events:
        if e["type"] not in SPENDING or e["name"] == NUMERAIRE:
            continue
        if user is not None and e.get("user") != user:
            continue
        cp1 += e["amt"] * e["buy_price"]
        cp2 += e["amt"] * e["sell_price"]
    return cp1, cp2


@dataclass(frozen=True)
class Violation:
    index: int
    kind: str
    detail: str


def oracle_overdraft(events):
    """First violation in a sequence of accepted transactions, or ``None``.

    Tracks unspent lots by id and checks: a spent lot exists, is unspent,
    belongs to the spender and matches its recorded plaintext; leftovers are
    non-negative and equal ``lot - amt``; exchanged value is conserved; a
    withdrawal never exceeds the lot.
    """
    lots = {}
    for n, e in enumerate(events):
        kind = e["type"]
        if kind == "deposit":
            for lot in e["new"]:
                if lot["id"] in lots:
                    return Violation(n, "lot_reissued", lot["id"])
                if lot["name"] != e["name"] or lot["amt"] != e["amt"]:
                    return Violation(n, "deposit_mismatch", f"credited {lot['amt']} for {e['amt']}")
                lots[lot["id"]] = (e["user"], lot)
            continue
        if kind not in SPENDING:
            continue
        spent = e["spent"]
        held = lots.pop(spent["id"], None)
        if held is None:
            return Violation(n, "unknown_or_spent_lot", spent["id"])
        owner, lot = held
        if owner != e["user"]:
            return Violation(n, "foreign_lot", spent["id"])
        if lot != spent:
            return Violation(n, "lot_mismatch", spent["id"])
        k = e["amt"]
        if not 0 <= k <= lot["amt"]:
            return Violation(n, "overdraft", f"spent {k} of {lot['amt']}")
        left = e["new"][0]
        if (left["name"], left["amt"], left["price"]) != (lot["name"], lot["amt"] - k, lot["price"]):
            return Violation(n, "bad_leftover", f"{left} from {lot} minus {k}")
        if kind == "exchange":
            got = e["new"][1]
            if k * e["sell_price"] != got["amt"] * e["target_price"]:
                return Violation(n, "unfair_exchange", f"{k}*{e['sell_price']} != {got['amt']}*{e['target_price']}")
            if (got["name"], got["price"]) != (e["target"], e["target_price"]):
                return Violation(n, "bad_credit", str(got))
        for new in e["new"]:
            if new["id"] in lots or new["amt"] < 0:
                return Violation(n, "bad_new_lot", new["id"])
            lots[new["id"]] = (e["user"], new)
    return None


# --- shadow exchange -----------------------------------------------------------


@dataclass
class _Account:
    registered: bool = False
    lots: list = field(default_factory=list)  # [name, amt, price]
    events: list = field(default_factory=list)  # spending events since the last file


class ShadowExchange:
    """Transparent model of the exchange: predicts every outcome and filed document."""

    def __init__(self, assets, prices, au: int = 0):
        self.assets = list(assets)
        self.prices = list(prices)
        self.au = au
        self.accounts: dict[str, _Account] = {}
        self.events: list = []
        self.docs: list = []

    def _acct(self, user) -> _Account:
        return self.accounts.setdefault(user, _Account())

    def _index(self, name) -> int:
        return name if isinstance(name, int) else self.assets.index(name)

    def _registered(self, user) -> _Account:
        a = self._acct(user)
        if not a.registered:
            raise _Refused("not_registered")
        return a

    @staticmethod
    def _pick(acct: _Account, name: int, amount: int):
        fits = [lot for lot in acct.lots if lot[0] == name and lot[1] >= amount]
        if not fits:
            raise _Refused("insufficient_balance")
        return min(fits, key=lambda lot: (lot[1], lot[2]))

    def apply(self, action: dict) -> dict:
        op = action["op"]
        out = {"op": op}
        try:
            out.update(getattr(self, f"_{op}")(action))
            out["status"] = "ok"
        except _Refused as r:
            out.update(status="error", code=r.code)
        return out

    def _join(self, a):
        acct = self._acct(a["user"])
        if acct.registered:
            raise _Refused("already_registered")
        acct.registered = True
        return {}

    def _deposit(self, a):
        acct = self._registered(a["user"])
        name, amt = self._index(a["asset"]), int(a["amount"])
        if not 0 <= amt < AMOUNT_LIMIT:
            raise _Refused("out_of_range")
        acct.lots.append([name, amt, self.prices[name]])
        return {"amount": amt}

    def _spend(self, acct, user, kind, lot, k, sell):
        ev = {"user": user, "type": kind, "name": lot[0], "amt": k, "buy_price": lot[2], "sell_price": sell}
        acct.events.append(ev)
        self.events.append(ev)
        acct.lots.remove(lot)
        acct.lots.append([lot[0], lot[1] - k, lot[2]])

    def _exchange(self, a):
        acct = self._registered(a["user"])
        src, dst, k = self._index(a["from"]), self._index(a["to"]), int(a["amount"])
        lot = self._pick(acct, src, k)
        value = k * self.prices[src]
        if value % self.prices[dst]:
            raise _Refused("inexact_exchange")
        got = value // self.prices[dst]
        if not 1 <= got < AMOUNT_LIMIT:
            raise _Refused("out_of_range")
        self._spend(acct, a["user"], "exchange", lot, k, self.prices[src])
        acct.lots.append([dst, got, self.prices[dst]])
        return {"received": got}

    def _withdraw(self, a):
        acct = self._registered(a["user"])
        name, k = self._index(a["asset"]), int(a["amount"])
        lot = self._pick(acct, name, k)
        self._spend(acct, a["user"], "withdraw", lot, k, self.prices[name])
        return {"amount": k}

    def _file(self, a):
        acct = self._registered(a["user"])
        cp1, cp2 = oracle_compliance(acct.events)
        acct.events = []
        au = int(a.get("au", self.au))
        self.docs.append({"user": a["user"], "cp1": cp1, "cp2": cp2, "au": au})
        return {"cp1": cp1, "cp2": cp2, "au": au}

    def _publish(self, a):
        if "prices" not in a:
            raise _Refused("no_prices")
        self.prices = list(a["prices"])
        return {}

    def _advance(self, a):
        return {}

    def _check(self, a):
        return {}


class _Refused(Exception):
    def __init__(self, code):
        super().__init__(code)
        self.code = code


COMPARED = ("status", "code", "received", "amount", "cp1", "cp2")


def diff_outcomes(actual, expected) -> list:
    """Field-level differences between runner outcomes and shadow predictions."""
    diffs = []
    for n, (a, e) in enumerate(zip(actual, expected, strict=True)):
        for key in COMPARED:
            if key in e and a.get(key) != e[key]:
                diffs.append({"index": n, "op": e["op"], "field": key, "actual": a.get(key), "expected": e[key]})
    return diffs


def diff_docs(actual, expected) -> list:
    diffs = []
    if len(actual) != len(expected):
        return [{"field": "count", "actual": len(actual), "expected": len(expected)}]
    for n, (a, e) in enumerate(zip(actual, expected)):
        for key in ("user", "cp1", "cp2", "au"):
            if a[key] != e[key]:
                diffs.append({"index": n, "field": key, "actual": a[key], "expected": e[key]})
        if not a.get("verified", True):
            diffs.append({"index": n, "field": "verified", "actual": False, "expected": True})
    return diffs


# --- random scenarios ----------------------------------------------------------------


def random_actions(rng: random.Random, users, assets: int, prices, *, steps: int = 3,
                   publish_rate: float = 0.15, bad_rate: float = 0.15, file_all: bool = True,
                   max_price: int = 5000) -> list:
    """A random action list for fresh ``users`` on a platform quoting ``prices``.

    Each user joins and deposits once.  The middle part mixes exchanges,
    withdrawals and price updates, mostly drawn from what the user holds
    (tracked on a private shadow) and sometimes deliberately overdrawn or
    inexact so that refusals are exercised too.  Publish actions carry
    explicit prices so a shadow exchange can follow them.
    """
    shadow = ShadowExchange(range(assets), prices)
    actions = []

    def emit(action):
        actions.append(action)
        shadow.apply(action)

    for u in users:
        emit({"op": "join", "user": u})
        emit({"op": "deposit", "user": u, "asset": rng.randrange(assets), "amount": rng.randrange(1, 200_000)})
    for _ in range(steps):
        u = rng.choice(users)
        lots = [lot for lot in shadow.accounts[u].lots if lot[1] > 0]
        roll = rng.random()
        if roll < publish_rate:
            new = [1] + [rng.randrange(1, max_price) for _ in range(assets - 1)]
            emit({"op": "publish", "prices": new})
            continue
        bad = rng.random() < bad_rate or not lots
        name, held = (rng.randrange(assets), 0) if bad else rng.choice(lots)[:2]
        if roll < 0.65:
            dst = rng.randrange(assets)
            amount = _amount(rng, shadow.prices, name, dst, held, bad)
            emit({"op": "exchange", "user": u, "from": name, "to": dst, "amount": amount})
        else:
            amount = rng.randrange(held + 1, held + 150_000) if bad else rng.randrange(0, held + 1)
            emit({"op": "withdraw", "user": u, "asset": name, "amount": amount})
    if file_all:
        for u in users:
            emit({"op": "file", "user": u})
    return actions


def _amount(rng: random.Random, prices, src: int, dst: int, held: int, bad: bool) -> int:
    """An exact amount (multiple of the fairness step) up to ``held``, or a bad one."""
    step = prices[dst] // gcd(prices[src], prices[dst])
    if bad or step > held:
        return rng.randrange(1, 150_000)
    return step * rng.randrange(1, held // step + 1)
