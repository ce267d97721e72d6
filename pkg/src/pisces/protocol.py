"""Shared transaction definitions: public keys, statements, requests, responses.

Both the user agent and the platform build the statement for a transaction
from the same public data, so a request is accepted only when the prover
and verifier agree on every clause.

Commitment layout (slot labels used in statements):

* ``com1`` old registration ``(usk, rid, cp1, cp2)``
* ``com2`` old asset ``(usk, aid, i, v, px)``
* ``com3`` new registration, ``com4`` leftover asset, ``com5`` new asset
* ``com6``/``com7`` price credentials ``(epoch, name, price)``

Records about to be blind-signed are committed under the signing key's own
bases; shown records use the hash-derived Pedersen bases.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

from .commit import CommitmentKey
from .encoding import Reader, Writer
from .group import G1, DecodeError, GroupParams
from .ps import PSPublicKey, PSSignature
from .records import AMOUNT_LIMIT, upk_scalar
from .zk import (
    Equal,
    Hidden,
    Linear,
    Opening,
    Product,
    Proof,
    PublicSlot,
    Range,
    SigPoK,
    Statement,
)

CONTEXT_TAG = b"pisces/ctx/v1"
PROTOCOL_VERSION = 1

TX_JOIN = 1
TX_DEPOSIT = 2
TX_EXCHANGE = 3
TX_WITHDRAW = 4
TX_FILE = 5

TX_NAMES = {TX_JOIN: "join", TX_DEPOSIT: "deposit", TX_EXCHANGE: "exchange", TX_WITHDRAW: "withdraw", TX_FILE: "file"}

# Asset index 0 is the numeraire (fiat unit of account); spending it is not a
# realisation event, so it never accrues cost or gain.
NUMERAIRE = 0


class ProtocolError(Exception):
    """A request was rejected.  ``code`` is stable and machine-readable."""

    def __init__(self, code: str, message: str | None = None):
        super().__init__(message or code.replace("_", " "))
        self.code = code

    @property
    def message(self) -> str:
        return str(self)


@dataclass(frozen=True)
class PlatformPublicKey:
    """Everything a user needs: group parameters, the four signing keys, the asset list.

    Keys are split by record type (price 3 slots, registration 4, asset 5,
    compliance 4) so that no record can pass as another type.
    """

    params: GroupParams
    price: PSPublicKey
    reg: PSPublicKey
    asset: PSPublicKey
    comp: PSPublicKey
    assets: tuple

    def __post_init__(self):
        object.__setattr__(self, "assets", tuple(self.assets))
        if not 1 <= len(self.assets) <= 1 << 16:
            raise ValueError("between 1 and 65536 assets are supported")
        shapes = ((self.price, 3), (self.reg, 4), (self.asset, 5), (self.comp, 4))
        if any(pk.slots != n for pk, n in shapes):
            raise ValueError("signing keys have the wrong slot counts")

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    def asset_index(self, name) -> int:
        if isinstance(name, int):
            if not 0 <= name < len(self.assets):
                raise KeyError(f"unknown asset index {name}")
            return name
        try:
            return self.assets.index(name)
        except ValueError:
            raise KeyError(f"unknown asset {name!r}") from None

    def to_bytes(self) -> bytes:
        w = Writer().blob(self.params.to_bytes())
        for pk in (self.price, self.reg, self.asset, self.comp):
            w.blob(pk.to_bytes())
        w.u32(len(self.assets))
        for a in self.assets:
            w.text(a)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> PlatformPublicKey:
        r = Reader(data)
        params_bytes = r.blob()
        params = GroupParams.default()
        if params_bytes != params.to_bytes():
            raise DecodeError("public key uses different group parameters")
        keys = [PSPublicKey.from_bytes(r.blob()) for _ in range(4)]
        assets = tuple(r.text() for _ in range(r.u32()))
        r.done()
        return cls(params, *keys, assets)

    @cached_property
    def digest(self) -> bytes:
        return hashlib.sha256(self.to_bytes()).digest()

    def precompute(self) -> PlatformPublicKey:
        for pk in (self.price, self.reg, self.asset, self.comp):
            pk.precompute()
        return self

    # commitment keys ---------------------------------------------------

    def pedersen(self, slots: int) -> CommitmentKey:
        keys = self.__dict__.setdefault("_pedersen", {})
        if slots not in keys:
            keys[slots] = CommitmentKey.pedersen(self.params, slots)
        return keys[slots]

    @cached_property
    def upk_key(self) -> CommitmentKey:
        return CommitmentKey((self.params.g,), None)


def context(pub: PlatformPublicKey, tx: int, epoch: int, header: bytes = b"") -> bytes:
    """Fiat-Shamir context: tx tag, key digest, price epoch and the public request header."""
    return Writer().raw(CONTEXT_TAG).u8(tx).raw(pub.digest).u64(epoch).blob(header).getvalue()


def deposit_header(ref: int) -> bytes:
    """Binds the settlement reference being claimed."""
    return Writer().u64(ref).getvalue()


def withdraw_header(address: str) -> bytes:
    """Binds the payout address."""
    return Writer().text(address).getvalue()


def _slots(label: str, n: int):
    return tuple(f"{label}.{j}" for j in range(n))


def join_statement(pub: PlatformPublicKey, upk: G1, com: G1) -> Statement:
    """upk = g*usk, com commits (usk, rid, 0, 0) under the registration key."""
    return Statement([
        Opening("upk", upk, pub.upk_key),
        Opening("com", com, pub.reg.commitment_key),
        Equal("upk.0", "com.0"),
        PublicSlot("com.2", 0),
        PublicSlot("com.3", 0),
    ], pub.params)


def deposit_statement(pub: PlatformPublicKey, name: int, amount: int, price: int, com1: G1, com2: G1) -> Statement:
    """A signed registration behind com1; com2 carries the same usk and the public (i, k, px)."""
    return Statement([
        Opening("com1", com1, pub.pedersen(4)),
        SigPoK("s1", pub.reg, _slots("com1", 4)),
        Opening("com2", com2, pub.asset.commitment_key),
        Equal("com1.0", "com2.0"),
        PublicSlot("com2.2", name),
        PublicSlot("com2.3", amount),
        PublicSlot("com2.4", price),
    ], pub.params)


def exchange_statement(pub: PlatformPublicKey, epoch: int, rid: int, aid: int, coms) -> Statement:
    c1, c2, c3, c4, c5, c6, c7 = coms
    return Statement([
        Opening("com1", c1, pub.pedersen(4)),
        Opening("com2", c2, pub.pedersen(5)),
        Opening("com3", c3, pub.reg.commitment_key),
        Opening("com4", c4, pub.asset.commitment_key),
        Opening("com5", c5, pub.asset.commitment_key),
        Opening("com6", c6, pub.pedersen(3)),
        Opening("com7", c7, pub.pedersen(3)),
        # signatures on the shown registration, asset and both price credentials
        SigPoK("s1", pub.reg, _slots("com1", 4)),
        SigPoK("s2", pub.asset, _slots("com2", 5)),
        SigPoK("s6", pub.price, _slots("com6", 3)),
        SigPoK("s7", pub.price, _slots("com7", 3)),
        PublicSlot("com1.1", rid),
        PublicSlot("com2.1", aid),
        PublicSlot("com6.0", epoch),
        PublicSlot("com7.0", epoch),
        # one usk across the five records
        Equal("com1.0", "com2.0"),
        Equal("com1.0", "com3.0"),
        Equal("com1.0", "com4.0"),
        Equal("com1.0", "com5.0"),
        # name i in old and leftover asset and its price credential; buying price kept
        Equal("com2.2", "com4.2"),
        Equal("com2.2", "com6.1"),
        Equal("com2.4", "com4.4"),
        # new asset j at the credential's current price
        Equal("com5.2", "com7.1"),
        Equal("com5.4", "com7.2"),
        # balance: v - k = v* with v* in range; k >= 1 then follows from fairness
        Hidden("ki"),
        Range("vs"),
        Equal("vs.v", "com4.3"),
        Linear(((1, "com2.3"), (-1, "ki.v"), (-1, "com4.3")), 0),
        # tax = [i != numeraire]: tax = i * inv and (1 - tax) * i = 0
        Hidden("inv"),
        Product("tax", "com2.2", "inv.v"),
        Product("ti", "tax.v", "com2.2"),
        Linear(((1, "com2.2"), (-1, "ti.v")), 0),
        # accrual cp1* = cp1 + tax*k*px, cp2* = cp2 + tax*k*px_now
        Product("p1", "ki.v", "com2.4"),
        Product("a1", "tax.v", "p1.v"),
        Linear(((1, "com3.2"), (-1, "com1.2"), (-1, "a1.v")), 0),
        Product("p2", "ki.v", "com6.2"),
        Product("a2", "tax.v", "p2.v"),
        Linear(((1, "com3.3"), (-1, "com1.3"), (-1, "a2.v")), 0),
        # fairness k*px_i_now = k_j*px_j_now with k_j >= 1
        Product("p3", "com5.3", "com7.2"),
        Equal("p2.v", "p3.v"),
        Range("kj", offset=1),
        Equal("kj.v", "com5.3"),
    ], pub.params)


def accrual_factor(name: int) -> int:
    return 0 if name == NUMERAIRE else 1


def withdraw_statement(pub: PlatformPublicKey, epoch: int, rid: int, aid: int, name: int, amount: int,
                       price_now: int, coms) -> Statement:
    c1, c2, c3, c4 = coms
    f = accrual_factor(name)
    return Statement([
        Opening("com1", c1, pub.pedersen(4)),
        Opening("com2", c2, pub.pedersen(5)),
        Opening("com3", c3, pub.reg.commitment_key),
        Opening("com4", c4, pub.asset.commitment_key),
        SigPoK("s1", pub.reg, _slots("com1", 4)),
        SigPoK("s2", pub.asset, _slots("com2", 5)),
        PublicSlot("com1.1", rid),
        PublicSlot("com2.1", aid),
        PublicSlot("com2.2", name),
        PublicSlot("com4.2", name),
        Equal("com1.0", "com2.0"),
        Equal("com1.0", "com3.0"),
        Equal("com1.0", "com4.0"),
        Equal("com2.4", "com4.4"),
        Range("vs"),
        Equal("vs.v", "com4.3"),
        Linear(((1, "com2.3"), (-1, "com4.3")), amount),
        Linear(((1, "com3.2"), (-1, "com1.2"), (-f * amount, "com2.4")), 0),
        Linear(((1, "com3.3"), (-1, "com1.3")), f * amount * price_now),
    ], pub.params)


def file_statement(pub: PlatformPublicKey, epoch: int, upk: G1, rid: int, au: int, coms) -> Statement:
    c1, c2, c3 = coms
    return Statement([
        Opening("upk", upk, pub.upk_key),
        Opening("com1", c1, pub.pedersen(4)),
        SigPoK("s1", pub.reg, _slots("com1", 4)),
        Opening("com2", c2, pub.reg.commitment_key),
        Opening("com3", c3, pub.comp.commitment_key),
        PublicSlot("com1.1", rid),
        PublicSlot("com2.2", 0),
        PublicSlot("com2.3", 0),
        PublicSlot("com3.0", upk_scalar(upk)),
        PublicSlot("com3.3", au),
        Equal("upk.0", "com1.0"),
        Equal("com1.0", "com2.0"),
        Equal("com1.2", "com3.1"),
        Equal("com1.3", "com3.2"),
    ], pub.params)


# --- requests ---------------------------------------------------------------
#
# Requests serialise as a sequence of tagged fields: a one-byte field tag
# followed by a fixed-width value (or a u32 length and bytes for blobs).

F_EPOCH, F_RID, F_AID, F_NAME, F_AMOUNT, F_PRICE, F_UPK, F_COM, F_PROOF, F_REF, F_ADDR, F_AU = range(1, 13)

def _write_field(w: Writer, tag: int, kind: str, value):
    w.u8(tag)
    if kind == "u64":
        w.u64(value)
    elif kind == "scalar":
        w.scalar(value)
    elif kind == "g1":
        w.point(value)
    elif kind == "coms":
        w.u8(len(value))
        for p in value:
            w.point(p)
    elif kind == "proof":
        w.blob(value.to_bytes())
    elif kind == "text":
        w.text(value)
    else:  # pragma: no cover
        raise AssertionError(kind)


def _read_field(r: Reader, tag: int, kind: str):
    got = r.u8()
    if got != tag:
        raise DecodeError(f"expected field tag {tag}, got {got}")
    if kind == "u64":
        return r.u64()
    if kind == "scalar":
        return r.scalar()
    if kind == "g1":
        return r.g1()
    if kind == "coms":
        return tuple(r.g1() for _ in range(r.u8()))
    if kind == "proof":
        return Proof.from_bytes(r.blob())
    if kind == "text":
        return r.text()
    raise AssertionError(kind)  # pragma: no cover


class _Message:
    TX = 0
    FIELDS = ()  # (field tag, attribute, kind)
    N_COMS = 0

    def to_bytes(self) -> bytes:
        w = Writer().u8(self.TX)
        for tag, attr, kind in self.FIELDS:
            _write_field(w, tag, kind, getattr(self, attr))
        return w.getvalue()

    @classmethod
    def read(cls, r: Reader):
        tx = r.u8()
        if tx != cls.TX:
            raise DecodeError(f"expected transaction {cls.TX}, got {tx}")
        values = {attr: _read_field(r, tag, kind) for tag, attr, kind in cls.FIELDS}
        if "coms" in values and len(values["coms"]) != cls.N_COMS:
            raise DecodeError(f"expected {cls.N_COMS} commitments")
        return cls(**values)

    @classmethod
    def from_bytes(cls, data: bytes):
        r = Reader(data)
        msg = cls.read(r)
        r.done()
        return msg

    def header(self) -> bytes:
        """Public fields outside the statement that the proof must still bind."""
        return b""

    @classmethod
    def field_names(cls):
        return tuple(attr for _, attr, _ in cls.FIELDS)


@dataclass(frozen=True)
class JoinRequest(_Message):
    epoch: int
    upk: G1
    com: G1
    proof: Proof
    TX = TX_JOIN
    FIELDS = ((F_EPOCH, "epoch", "u64"), (F_UPK, "upk", "g1"), (F_COM, "com", "g1"), (F_PROOF, "proof", "proof"))

    def statement(self, pub):
        return join_statement(pub, self.upk, self.com)


@dataclass(frozen=True)
class DepositRequest(_Message):
    epoch: int
    name: int
    amount: int
    price: int
    ref: int
    coms: tuple
    proof: Proof
    TX = TX_DEPOSIT
    N_COMS = 2
    FIELDS = (
        (F_EPOCH, "epoch", "u64"), (F_NAME, "name", "u64"), (F_AMOUNT, "amount", "u64"),
        (F_PRICE, "price", "u64"), (F_REF, "ref", "u64"), (F_COM, "coms", "coms"), (F_PROOF, "proof", "proof"),
    )

    def header(self) -> bytes:
        return deposit_header(self.ref)

    def statement(self, pub):
        return deposit_statement(pub, self.name, self.amount, self.price, *self.coms)


@dataclass(frozen=True)
class ExchangeRequest(_Message):
    epoch: int
    rid: int
    aid: int
    coms: tuple
    proof: Proof
    TX = TX_EXCHANGE
    N_COMS = 7
    FIELDS = (
        (F_EPOCH, "epoch", "u64"), (F_RID, "rid", "scalar"), (F_AID, "aid", "scalar"),
        (F_COM, "coms", "coms"), (F_PROOF, "proof", "proof"),
    )

    def statement(self, pub):
        return exchange_statement(pub, self.epoch, self.rid, self.aid, self.coms)


@dataclass(frozen=True)
class WithdrawRequest(_Message):
    epoch: int
    rid: int
    aid: int
    name: int
    amount: int
    address: str
    coms: tuple
    proof: Proof
    TX = TX_WITHDRAW
    N_COMS = 4
    FIELDS = (
        (F_EPOCH, "epoch", "u64"), (F_RID, "rid", "scalar"), (F_AID, "aid", "scalar"),
        (F_NAME, "name", "u64"), (F_AMOUNT, "amount", "u64"), (F_ADDR, "address", "text"),
        (F_COM, "coms", "coms"), (F_PROOF, "proof", "proof"),
    )

    def header(self) -> bytes:
        return withdraw_header(self.address)

    def statement(self, pub, price_now: int):
        return withdraw_statement(pub, self.epoch, self.rid, self.aid, self.name, self.amount, price_now, self.coms)


@dataclass(frozen=True)
class FileRequest(_Message):
    epoch: int
    upk: G1
    rid: int
    au: int
    coms: tuple
    proof: Proof
    TX = TX_FILE
    N_COMS = 3
    FIELDS = (
        (F_EPOCH, "epoch", "u64"), (F_UPK, "upk", "g1"), (F_RID, "rid", "scalar"), (F_AU, "au", "u64"),
        (F_COM, "coms", "coms"), (F_PROOF, "proof", "proof"),
    )

    def statement(self, pub):
        return file_statement(pub, self.epoch, self.upk, self.rid, self.au, self.coms)


REQUEST_TYPES = {cls.TX: cls for cls in (JoinRequest, DepositRequest, ExchangeRequest, WithdrawRequest, FileRequest)}


def decode_request(data: bytes):
    if not data:
        raise DecodeError("empty request")
    cls = REQUEST_TYPES.get(data[0])
    if cls is None:
        raise DecodeError(f"unknown transaction tag {data[0]}")
    return cls.from_bytes(data)


def field_tags(data: bytes) -> list:
    """Sequence of field tags in a serialised request (shape comparisons)."""
    req = decode_request(data)
    return [data[0]] + [tag for tag, _, _ in req.FIELDS]


@dataclass(frozen=True)
class BlindResponse:
    """Blind signatures in the order of the request's to-be-signed commitments."""

    tx: int
    sigs: tuple

    def to_bytes(self) -> bytes:
        w = Writer().u8(self.tx).u8(len(self.sigs))
        for s in self.sigs:
            w.raw(s.to_bytes())
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> BlindResponse:
        r = Reader(data)
        tx = r.u8()
        sigs = tuple(PSSignature.read(r) for _ in range(r.u8()))
        r.done()
        return cls(tx, sigs)


def check_amount(value: int, what: str = "amount"):
    if not isinstance(value, int) or not 0 <= value < AMOUNT_LIMIT:
        raise ProtocolError("out_of_range", f"{what} must be an integer in [0, 2^32)")
