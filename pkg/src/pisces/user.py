"""User agent: builds transaction requests and turns blind responses into records."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from math import gcd

from .commit import pedersen_commit
from .group import ORDER, random_scalar
from .protocol import (
    NUMERAIRE,
    TX_DEPOSIT,
    TX_EXCHANGE,
    TX_FILE,
    TX_JOIN,
    TX_NAMES,
    TX_WITHDRAW,
    BlindResponse,
    DepositRequest,
    ExchangeRequest,
    FileRequest,
    JoinRequest,
    PlatformPublicKey,
    ProtocolError,
    WithdrawRequest,
    accrual_factor,
    check_amount,
    context,
)
from .ps import BlindIssuanceSession, blind_request, ps_verify_batch, unblind
from .records import (
    AMOUNT_LIMIT,
    AssetRecord,
    ComplianceDoc,
    PriceCredential,
    RegistrationRecord,
    compute_upk,
    upk_scalar,
)
from .zk import prove

log = logging.getLogger(__name__)

WALLET_FORMAT = "pisces-wallet/1"


class InexactExchange(ProtocolError):
    """``k_i * price_i`` is not a multiple of ``price_j``; ``suggested`` divides exactly."""

    def __init__(self, suggested: int):
        super().__init__("inexact_exchange", f"inexact exchange, try amount {suggested}")
        self.suggested = suggested


class DesyncError(ProtocolError):
    """The platform accepted (and burned our nonces) but its signatures do not verify."""

    def __init__(self, message: str):
        super().__init__("desync", message)


@dataclass
class Pending:
    """Blind-issuance state for one in-flight request."""

    tx: int
    sessions: tuple
    spends: tuple = ()
    info: dict = field(default_factory=dict)


def _inverse(x: int) -> int:
    return pow(x, -1, ORDER) if x % ORDER else 0


class UserWallet:
    """Holds one user's secret key, registration record, asset records and price credentials.

    The wallet is single-owner: build at most one request per record at a
    time.  Records spent by a request in flight are locked until ``finalize``
    (or ``abort``) runs.
    """

    def __init__(self, pub: PlatformPublicKey, usk: int | None = None, rng=None):
        self.pub = pub
        self.rng = rng
        self.usk = usk % ORDER if usk is not None else random_scalar(rng, nonzero=True)
        self.upk = compute_upk(self.usk, pub.params)
        self.registration: RegistrationRecord | None = None
        self.assets: dict[int, AssetRecord] = {}
        self.prices: dict[int, PriceCredential] = {}
        self.epoch = 0
        self.docs: list[ComplianceDoc] = []
        self.used_nonces: set[int] = set()
        self.locked: set[int] = set()

    # -- helpers ----------------------------------------------------------

    def _fresh_nonce(self) -> int:
        while True:
            n = random_scalar(self.rng, nonzero=True)
            if n not in self.used_nonces:
                self.used_nonces.add(n)
                return n

    def _lock(self, *nonces):
        for n in nonces:
            if n in self.locked:
                raise ProtocolError("record_busy", "record already used by a pending request")
        self.locked.update(nonces)

    def _require_registration(self) -> RegistrationRecord:
        if self.registration is None:
            raise ProtocolError("not_registered", "wallet has no registration record")
        return self.registration

    def update_prices(self, epoch: int, creds) -> None:
        """Accept a price feed after checking every credential's signature and epoch."""
        creds = list(creds)
        for cred in creds:
            if cred.time != epoch or not 0 <= cred.name < self.pub.n_assets:
                raise ProtocolError("invalid_price", f"bad price credential for asset {cred.name}")
        if not ps_verify_batch(self.pub.price, [(c.messages(), c.sig) for c in creds]):
            raise ProtocolError("invalid_price", "price feed signature check failed")
        self.epoch = epoch
        self.prices = {c.name: c for c in creds}

    def price(self, name: int) -> PriceCredential:
        try:
            return self.prices[name]
        except KeyError:
            raise ProtocolError("invalid_price", f"no current price for asset {name}") from None

    def balance(self, name: int) -> int:
        return sum(a.amt for a in self.assets.values() if a.name == name)

    def pick_asset(self, name: int, amount: int) -> AssetRecord:
        """Smallest unlocked record of ``name`` holding at least ``amount``.

        Ties go to the lower buying price; records equal in both are
        interchangeable for every later computation.
        """
        fits = [a for a in self.assets.values() if a.name == name and a.amt >= amount and a.aid not in self.locked]
        if not fits:
            raise ProtocolError("insufficient_balance", "insufficient balance")
        return min(fits, key=lambda a: (a.amt, a.price))

    def _ctx(self, tx: int, header: bytes = b"") -> bytes:
        return context(self.pub, tx, self.epoch, header)

    def _prove(self, stmt, witness, ctx):
        return prove(stmt, witness, ctx, self.rng)

    @staticmethod
    def _accrue(reg: RegistrationRecord, name: int, k: int, buy: int, sell: int) -> tuple:
        """Counters after spending ``k`` units bought at ``buy`` and sold at ``sell``."""
        tax = accrual_factor(name)
        return reg.cp1 + tax * k * buy, reg.cp2 + tax * k * sell

    # -- builders ---------------------------------------------------------

    def build_join(self):
        if self.registration is not None:
            raise ProtocolError("already_registered", "already registered")
        rid = self._fresh_nonce()
        sess = blind_request(self.pub.reg, (self.usk, rid, 0, 0), self.rng)
        witness = {"upk.0": self.usk, "com.0": self.usk, "com.1": rid, "com.2": 0, "com.3": 0, "com.r": sess.t}
        stmt = JoinRequest(self.epoch, self.upk, sess.commitment, None).statement(self.pub)
        proof = self._prove(stmt, witness, self._ctx(TX_JOIN))
        req = JoinRequest(self.epoch, self.upk, sess.commitment, proof)
        return req, Pending(TX_JOIN, (sess,), info={"rid": rid})

    def build_deposit(self, name: int, amount: int, ref: int, price: int | None = None):
        reg = self._require_registration()
        check_amount(amount)
        price = self.price(name).pr if price is None else price
        check_amount(price, "price")
        aid = self._fresh_nonce()
        r1 = random_scalar(self.rng)
        com1 = pedersen_commit(reg.messages(), r1, self.pub.pedersen(4))
        sess = blind_request(self.pub.asset, (self.usk, aid, name, amount, price), self.rng)
        witness = {"com1.r": r1, "s1.sig": reg.sig, "com2.r": sess.t}
        witness.update(zip(("com1.0", "com1.1", "com1.2", "com1.3"), reg.messages()))
        witness.update(zip(("com2.0", "com2.1", "com2.2", "com2.3", "com2.4"), sess.messages))
        coms = (com1.point, sess.commitment)
        draft = DepositRequest(self.epoch, name, amount, price, ref, coms, None)
        proof = self._prove(draft.statement(self.pub), witness, self._ctx(TX_DEPOSIT, draft.header()))
        req = DepositRequest(self.epoch, name, amount, price, ref, coms, proof)
        return req, Pending(TX_DEPOSIT, (sess,), info={"name": name, "amount": amount, "price": price})

    @staticmethod
    def exchange_amount(k: int, price_i: int, price_j: int) -> int:
        """Units of j received for ``k`` units of i; raises ``InexactExchange`` when not exact."""
        if price_j <= 0:
            raise ProtocolError("invalid_price", "target price must be positive")
        value = k * price_i
        if value % price_j:
            step = price_j // gcd(price_i, price_j)
            raise InexactExchange(k - k % step)
        return value // price_j

    def build_exchange(self, asset: AssetRecord, target: int, amount: int):
        reg = self._require_registration()
        check_amount(amount)
        if amount > asset.amt:
            raise ProtocolError("insufficient_balance", "insufficient balance")
        cred_i, cred_j = self.price(asset.name), self.price(target)
        k_j = self.exchange_amount(amount, cred_i.pr, cred_j.pr)
        if not 1 <= k_j < AMOUNT_LIMIT:
            raise ProtocolError("out_of_range", "exchanged-in amount must be in [1, 2^32)")
        self._lock(reg.rid, asset.aid)
        try:
            return self._build_exchange(reg, asset, target, amount, k_j, cred_i, cred_j)
        except Exception:
            self.locked.difference_update((reg.rid, asset.aid))
            raise

    def _build_exchange(self, reg, asset, target, k, k_j, cred_i, cred_j):
        pub, rng, usk = self.pub, self.rng, self.usk
        i = asset.name
        cp1, cp2 = self._accrue(reg, i, k, asset.price, cred_i.pr)
        v_left = asset.amt - k
        rid_new, aid_left, aid_new = self._fresh_nonce(), self._fresh_nonce(), self._fresh_nonce()

        rs = [random_scalar(rng) for _ in range(4)]
        com1 = pedersen_commit(reg.messages(), rs[0], pub.pedersen(4))
        com2 = pedersen_commit(asset.messages(), rs[1], pub.pedersen(5))
        com6 = pedersen_commit(cred_i.messages(), rs[2], pub.pedersen(3))
        com7 = pedersen_commit(cred_j.messages(), rs[3], pub.pedersen(3))
        s3 = blind_request(pub.reg, (usk, rid_new, cp1, cp2), rng)
        s4 = blind_request(pub.asset, (usk, aid_left, i, v_left, asset.price), rng)
        s5 = blind_request(pub.asset, (usk, aid_new, target, k_j, cred_j.pr), rng)

        w = {}
        for label, msgs, r in (("com1", reg.messages(), rs[0]), ("com2", asset.messages(), rs[1]),
                               ("com6", cred_i.messages(), rs[2]), ("com7", cred_j.messages(), rs[3]),
                               ("com3", s3.messages, s3.t), ("com4", s4.messages, s4.t),
                               ("com5", s5.messages, s5.t)):
            w.update((f"{label}.{j}", m) for j, m in enumerate(msgs))
            w[f"{label}.r"] = r
        w.update({"s1.sig": reg.sig, "s2.sig": asset.sig, "s6.sig": cred_i.sig, "s7.sig": cred_j.sig,
                  "ki.v": k, "vs.v": v_left, "kj.v": k_j, "inv.v": _inverse(i)})

        coms = (com1.point, com2.point, s3.commitment, s4.commitment, s5.commitment, com6.point, com7.point)
        draft = ExchangeRequest(self.epoch, reg.rid, asset.aid, coms, None)
        proof = self._prove(draft.statement(pub), w, self._ctx(TX_EXCHANGE))
        req = ExchangeRequest(self.epoch, reg.rid, asset.aid, coms, proof)
        info = {"name": i, "amount": k, "target": target, "received": k_j,
                "buy_price": asset.price, "sell_price": cred_i.pr, "target_price": cred_j.pr}
        return req, Pending(TX_EXCHANGE, (s3, s4, s5), (reg.rid, asset.aid), info)

    def build_withdraw(self, asset: AssetRecord, amount: int, address: str):
        reg = self._require_registration()
        check_amount(amount)
        if amount > asset.amt:
            raise ProtocolError("insufficient_balance", "insufficient balance")
        price_now = self.price(asset.name).pr
        self._lock(reg.rid, asset.aid)
        try:
            return self._build_withdraw(reg, asset, amount, address, price_now)
        except Exception:
            self.locked.difference_update((reg.rid, asset.aid))
            raise

    def _build_withdraw(self, reg, asset, k, address, price_now):
        pub, rng, usk = self.pub, self.rng, self.usk
        cp1, cp2 = self._accrue(reg, asset.name, k, asset.price, price_now)
        rid_new, aid_left = self._fresh_nonce(), self._fresh_nonce()
        r1, r2 = random_scalar(rng), random_scalar(rng)
        com1 = pedersen_commit(reg.messages(), r1, pub.pedersen(4))
        com2 = pedersen_commit(asset.messages(), r2, pub.pedersen(5))
        s3 = blind_request(pub.reg, (usk, rid_new, cp1, cp2), rng)
        s4 = blind_request(pub.asset, (usk, aid_left, asset.name, asset.amt - k, asset.price), rng)
        w = {}
        for label, msgs, r in (("com1", reg.messages(), r1), ("com2", asset.messages(), r2),
                               ("com3", s3.messages, s3.t), ("com4", s4.messages, s4.t)):
            w.update((f"{label}.{j}", m) for j, m in enumerate(msgs))
            w[f"{label}.r"] = r
        w.update({"s1.sig": reg.sig, "s2.sig": asset.sig, "vs.v": asset.amt - k})
        coms = (com1.point, com2.point, s3.commitment, s4.commitment)
        draft = WithdrawRequest(self.epoch, reg.rid, asset.aid, asset.name, k, address, coms, None)
        ctx = self._ctx(TX_WITHDRAW, draft.header())
        proof = self._prove(draft.statement(pub, price_now), w, ctx)
        req = WithdrawRequest(self.epoch, reg.rid, asset.aid, asset.name, k, address, coms, proof)
        info = {"name": asset.name, "amount": k, "buy_price": asset.price, "sell_price": price_now,
                "address": address}
        return req, Pending(TX_WITHDRAW, (s3, s4), (reg.rid, asset.aid), info)

    def build_file(self, au: int):
        reg = self._require_registration()
        self._lock(reg.rid)
        try:
            return self._build_file(reg, au)
        except Exception:
            self.locked.discard(reg.rid)
            raise

    def _build_file(self, reg, au):
        pub, rng, usk = self.pub, self.rng, self.usk
        rid_new = self._fresh_nonce()
        r1 = random_scalar(rng)
        com1 = pedersen_commit(reg.messages(), r1, pub.pedersen(4))
        s2 = blind_request(pub.reg, (usk, rid_new, 0, 0), rng)
        s3 = blind_request(pub.comp, (upk_scalar(self.upk), reg.cp1, reg.cp2, au), rng)
        w = {"upk.0": usk}
        for label, msgs, r in (("com1", reg.messages(), r1), ("com2", s2.messages, s2.t),
                               ("com3", s3.messages, s3.t)):
            w.update((f"{label}.{j}", m) for j, m in enumerate(msgs))
            w[f"{label}.r"] = r
        w["s1.sig"] = reg.sig
        coms = (com1.point, s2.commitment, s3.commitment)
        draft = FileRequest(self.epoch, self.upk, reg.rid, au, coms, None)
        proof = self._prove(draft.statement(pub), w, self._ctx(TX_FILE))
        req = FileRequest(self.epoch, self.upk, reg.rid, au, coms, proof)
        info = {"au": au, "cp1": reg.cp1, "cp2": reg.cp2}
        return req, Pending(TX_FILE, (s2, s3), (reg.rid,), info)

    # -- finalisation -----------------------------------------------------

    def abort(self, pending: Pending):
        """Release locks after a rejected request; the old records stay spendable."""
        self.locked.difference_update(pending.spends)

    def finalize(self, pending: Pending, response: BlindResponse):
        """Unblind, verify and install the new records; returns them.

        The wallet changes only if every signature verifies.
        """
        if response.tx != pending.tx or len(response.sigs) != len(pending.sessions):
            self.abort(pending)
            raise DesyncError("response does not match the pending request")
        sigs = [unblind(sess, blind) for sess, blind in zip(pending.sessions, response.sigs)]
        records = [self._record(sess, sig) for sess, sig in zip(pending.sessions, sigs)]
        keys = [sess.pk for sess in pending.sessions]
        if not all(rec.verify(pk) for rec, pk in zip(records, keys)):
            self.abort(pending)
            raise DesyncError(f"platform signature on {TX_NAMES[pending.tx]} output does not verify")

        # install atomically
        self.locked.difference_update(pending.spends)
        for n in pending.spends:
            self.assets.pop(n, None)
        for rec in records:
            if isinstance(rec, RegistrationRecord):
                self.registration = rec
            elif isinstance(rec, AssetRecord):
                self.assets[rec.aid] = rec
            else:
                self.docs.append(rec)
        return records

    def _record(self, sess: BlindIssuanceSession, sig):
        m = sess.messages
        if sess.pk == self.pub.reg:
            return RegistrationRecord(*m, sig)
        if sess.pk == self.pub.asset:
            return AssetRecord(*m, sig)
        if sess.pk == self.pub.comp:
            return ComplianceDoc(self.upk, m[1], m[2], m[3], sig)
        raise AssertionError("unknown issuing key")

    # -- persistence ------------------------------------------------------

    def to_json(self) -> str:
        """Plaintext wallet file: JSON with hex-encoded records (sorted, deterministic)."""
        data = {
            "format": WALLET_FORMAT,
            "usk": hex(self.usk),
            "epoch": self.epoch,
            "registration": self.registration.to_bytes().hex() if self.registration else None,
            "assets": [a.to_bytes().hex() for a in self.assets.values()],
            "prices": [self.prices[k].to_bytes().hex() for k in sorted(self.prices)],
            "docs": [d.to_bytes().hex() for d in self.docs],
            "used_nonces": sorted(hex(n) for n in self.used_nonces),
        }
        return json.dumps(data, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, pub: PlatformPublicKey, text: str, rng=None) -> UserWallet:
        data = json.loads(text)
        if data.get("format") != WALLET_FORMAT:
            raise ValueError("not a wallet file")
        w = cls(pub, int(data["usk"], 16), rng)
        w.epoch = data["epoch"]
        if data["registration"]:
            w.registration = RegistrationRecord.from_bytes(bytes.fromhex(data["registration"]))
        for h in data["assets"]:
            a = AssetRecord.from_bytes(bytes.fromhex(h))
            w.assets[a.aid] = a
        for h in data["prices"]:
            p = PriceCredential.from_bytes(bytes.fromhex(h))
            w.prices[p.name] = p
        w.docs = [ComplianceDoc.from_bytes(bytes.fromhex(h)) for h in data["docs"]]
        w.used_nonces = {int(n, 16) for n in data["used_nonces"]}
        return w

    @property
    def cp(self) -> tuple:
        reg = self._require_registration()
        return reg.cp1, reg.cp2


__all__ = ["NUMERAIRE", "DesyncError", "InexactExchange", "Pending", "UserWallet"]
