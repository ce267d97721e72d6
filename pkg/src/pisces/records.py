"""Signed attribute tuples that carry all protocol state.

Wire layout of every record::

    [type tag: u8][version: u8][fields in declared order][sigma1][sigma2]

Scalars are 32 bytes big-endian, points use compressed encodings.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .encoding import Reader, Writer
from .group import G1, ORDER, DecodeError, GroupParams, fixed_base, hash_to_scalar
from .ps import PSPublicKey, PSSignature, ps_verify

RECORD_VERSION = 1
UPK_TAG = b"pisces/upk/v1"

TAG_REGISTRATION = 0x01
TAG_ASSET = 0x02
TAG_PRICE = 0x03
TAG_COMPLIANCE = 0x04

AMOUNT_LIMIT = 1 << 32


def compute_upk(usk: int, params: GroupParams | None = None) -> G1:
    """User public key ``g*usk``."""
    usk %= ORDER
    if usk == 0:
        raise ValueError("user secret key must be non-zero")
    params = params or GroupParams.default()
    return fixed_base(params.g) * usk


def upk_scalar(upk: G1) -> int:
    """Scalar stand-in for ``upk`` inside compliance signatures."""
    return hash_to_scalar(UPK_TAG, upk.to_bytes())


class _Record:
    TAG = 0
    SLOTS = ()

    def messages(self) -> tuple:
        return tuple(getattr(self, name) % ORDER for name in self.SLOTS)

    def verify(self, pk: PSPublicKey) -> bool:
        return ps_verify(pk, self.messages(), self.sig)

    def _write_fields(self, w: Writer):
        for name in self.SLOTS:
            w.scalar(getattr(self, name))

    @classmethod
    def _read_fields(cls, r: Reader) -> dict:
        return {name: r.scalar() for name in cls.SLOTS}

    def to_bytes(self) -> bytes:
        w = Writer().u8(self.TAG).u8(RECORD_VERSION)
        self._write_fields(w)
        w.raw(self.sig.to_bytes())
        return w.getvalue()

    @classmethod
    def read(cls, r: Reader):
        tag = r.u8()
        if tag != cls.TAG:
            raise DecodeError(f"expected record tag {cls.TAG}, got {tag}")
        version = r.u8()
        if version != RECORD_VERSION:
            raise DecodeError(f"unsupported record version {version}")
        values = cls._read_fields(r)
        return cls(**values, sig=PSSignature.read(r))

    @classmethod
    def from_bytes(cls, data: bytes):
        r = Reader(data)
        rec = cls.read(r)
        r.done()
        return rec


@dataclass(frozen=True)
class RegistrationRecord(_Record):
    """The user's long-lived credential: (usk, rid, cp1, cp2)."""

    usk: int
    rid: int
    cp1: int
    cp2: int
    sig: PSSignature
    TAG = TAG_REGISTRATION
    SLOTS = ("usk", "rid", "cp1", "cp2")

    @property
    def nonce(self) -> int:
        return self.rid


@dataclass(frozen=True)
class AssetRecord(_Record):
    """A one-time credential for ``amt`` units of asset ``name`` bought at ``price``."""

    usk: int
    aid: int
    name: int
    amt: int
    price: int
    sig: PSSignature
    TAG = TAG_ASSET
    SLOTS = ("usk", "aid", "name", "amt", "price")

    @property
    def nonce(self) -> int:
        return self.aid


@dataclass(frozen=True)
class PriceCredential(_Record):
    """Platform signature on ``(time, name, pr)`` for one price epoch."""

    time: int
    name: int
    pr: int
    sig: PSSignature
    TAG = TAG_PRICE
    SLOTS = ("time", "name", "pr")


@dataclass(frozen=True)
class ComplianceDoc(_Record):
    """Filed compliance document; the signature covers ``H(upk)`` in the first slot."""

    upk: G1
    cp1: int
    cp2: int
    au: int
    sig: PSSignature
    TAG = TAG_COMPLIANCE
    SLOTS = ("upk", "cp1", "cp2", "au")

    def messages(self) -> tuple:
        return (upk_scalar(self.upk), self.cp1 % ORDER, self.cp2 % ORDER, self.au % ORDER)

    def _write_fields(self, w: Writer):
        w.point(self.upk).scalar(self.cp1).scalar(self.cp2).scalar(self.au)

    @classmethod
    def _read_fields(cls, r: Reader) -> dict:
        return {"upk": r.g1(), "cp1": r.scalar(), "cp2": r.scalar(), "au": r.scalar()}


RECORD_TYPES = {cls.TAG: cls for cls in (RegistrationRecord, AssetRecord, PriceCredential, ComplianceDoc)}


def decode_record(data: bytes):
    """Decode any record by its leading type tag."""
    if not data:
        raise DecodeError("empty record")
    cls = RECORD_TYPES.get(data[0])
    if cls is None:
        raise DecodeError(f"unknown record tag {data[0]}")
    return cls.from_bytes(data)


def record_fields(rec) -> dict:
    """Plain field values (signature excluded), handy for logging and oracles."""
    return {f.name: getattr(rec, f.name) for f in fields(rec) if f.name != "sig"}
