"""Pairing-group arithmetic over BLS12-381.

Scalars are plain Python ints reduced modulo ``ORDER``.  Group elements are
thin immutable wrappers over the ``py_arkworks_bls12381`` types and use
additive notation for G1/G2 (``P + Q``, ``P * k``) and multiplicative
notation for GT (``a * b``, ``a ** k``), the same way petlib does.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass
from functools import lru_cache

from py_arkworks_bls12381 import GT as _GT
from py_arkworks_bls12381 import G1Point, G2Point
from py_arkworks_bls12381 import Scalar as _Fr

CURVE_NAME = "bls12-381"
CURVE_ID = 0x12

ORDER = 0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001
FIELD_MODULUS = 0x1A0111EA397FE69A4B1BA7B6434BACD764774B84F38512BF6730D2A0F6B0F6241EABFFFEB153FFFFB9FEFFFFFFFFAAAB
G1_COFACTOR = 0x396C8C005555E1568C00AAAB0000AAAB

SCALAR_SIZE = 32
G1_SIZE = 48
G2_SIZE = 96
GT_SIZE = 576

FS_TAG = b"pisces/fs/v1"

_system_rng = secrets.SystemRandom()


class DecodeError(ValueError):
    """Raised for malformed, off-curve or wrong-subgroup encodings."""


def default_rng():
    return _system_rng


def random_scalar(rng=None, nonzero=False):
    rng = rng or _system_rng
    if nonzero:
        return rng.randrange(1, ORDER)
    return rng.randrange(ORDER)


def scalar_to_bytes(x: int) -> bytes:
    return (x % ORDER).to_bytes(SCALAR_SIZE, "big")


def scalar_from_bytes(data: bytes) -> int:
    if len(data) != SCALAR_SIZE:
        raise DecodeError("scalar must be 32 bytes")
    x = int.from_bytes(data, "big")
    if x >= ORDER:
        raise DecodeError("non-canonical scalar")
    return x


def _fr(x: int) -> _Fr:
    return _Fr.from_le_bytes((x % ORDER).to_bytes(SCALAR_SIZE, "little"))


def fr_to_int(x: _Fr) -> int:
    return int.from_bytes(bytes(x.to_le_bytes()), "little")


def hash_to_scalar(domain_tag: bytes, data: bytes = b"") -> int:
    """Hash to [0, ORDER) with a 64-byte digest, so the modular bias is ~2^-257."""
    if not domain_tag:
        raise ValueError("domain tag must be non-empty")
    h = hashlib.sha512()
    h.update(len(domain_tag).to_bytes(2, "big"))
    h.update(domain_tag)
    h.update(data)
    return int.from_bytes(h.digest(), "big") % ORDER


class G1:
    __slots__ = ("_p", "_enc")
    SIZE = G1_SIZE

    def __init__(self, raw: G1Point):
        self._p = raw
        self._enc = None

    @classmethod
    def generator(cls) -> G1:
        return _G1_GEN

    @classmethod
    def identity(cls) -> G1:
        return _G1_ID

    def __add__(self, other: G1) -> G1:
        return G1(self._p + other._p)

    def __sub__(self, other: G1) -> G1:
        return G1(self._p - other._p)

    def __neg__(self) -> G1:
        return G1(-self._p)

    def __mul__(self, k: int) -> G1:
        k %= ORDER
        if k == 0:
            return _G1_ID
        if k == 1:
            return self
        return G1(self._p * _fr(k))

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, G1) and self._p == other._p

    def __hash__(self):
        return hash(self.to_bytes())

    def __repr__(self):
        return f"G1({self.to_bytes().hex()[:16]}..)"

    def is_identity(self) -> bool:
        return self._p == _G1_ID._p

    def to_bytes(self) -> bytes:
        # points are immutable and re-encoded many times by transcripts
        if self._enc is None:
            self._enc = bytes(self._p.to_compressed_bytes())
        return self._enc

    @classmethod
    def from_bytes(cls, data: bytes) -> G1:
        if len(data) != G1_SIZE:
            raise DecodeError("G1 encoding must be 48 bytes")
        data = bytes(data)
        if data[0] & _INFINITY_FLAG and data != _G1_ID_BYTES:
            raise DecodeError("non-canonical encoding of the identity")
        try:
            return cls(G1Point.from_compressed_bytes(data))
        except ValueError as exc:
            raise DecodeError(f"invalid G1 encoding: {exc}") from None

    @classmethod
    def hash_to_point(cls, tag: bytes) -> G1:
        """Try-and-increment map followed by cofactor clearing.

        Nobody learns the discrete log of the output with respect to any other
        point, which is what commitment bases need.
        """
        ctr = 0
        while True:
            digest = hashlib.sha512(b"pisces/h2c/v1" + tag + ctr.to_bytes(4, "big")).digest()
            x = int.from_bytes(digest, "big") % FIELD_MODULUS
            rhs = (x * x * x + 4) % FIELD_MODULUS
            y = pow(rhs, (FIELD_MODULUS + 1) // 4, FIELD_MODULUS)
            if y * y % FIELD_MODULUS == rhs:
                enc = bytearray(x.to_bytes(G1_SIZE, "big"))
                enc[0] |= 0x80
                raw = G1Point.from_compressed_bytes_unchecked(bytes(enc))
                point = cls(raw * _fr(G1_COFACTOR))
                if not point.is_identity():
                    return point
            ctr += 1


class G2:
    __slots__ = ("_p",)
    SIZE = G2_SIZE

    def __init__(self, raw: G2Point):
        self._p = raw

    @classmethod
    def generator(cls) -> G2:
        return _G2_GEN

    @classmethod
    def identity(cls) -> G2:
        return _G2_ID

    def __add__(self, other: G2) -> G2:
        return G2(self._p + other._p)

    def __sub__(self, other: G2) -> G2:
        return G2(self._p - other._p)

    def __neg__(self) -> G2:
        return G2(-self._p)

    def __mul__(self, k: int) -> G2:
        k %= ORDER
        if k == 0:
            return _G2_ID
        return G2(self._p * _fr(k))

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, G2) and self._p == other._p

    def __hash__(self):
        return hash(self.to_bytes())

    def __repr__(self):
        return f"G2({self.to_bytes().hex()[:16]}..)"

    def is_identity(self) -> bool:
        return self._p == _G2_ID._p

    def to_bytes(self) -> bytes:
        return bytes(self._p.to_compressed_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> G2:
        if len(data) != G2_SIZE:
            raise DecodeError("G2 encoding must be 96 bytes")
        data = bytes(data)
        if data[0] & _INFINITY_FLAG and data != _G2_ID_BYTES:
            raise DecodeError("non-canonical encoding of the identity")
        try:
            return cls(G2Point.from_compressed_bytes(data))
        except ValueError as exc:
            raise DecodeError(f"invalid G2 encoding: {exc}") from None


class GT:
    """Target group, written multiplicatively."""

    __slots__ = ("_e",)
    SIZE = GT_SIZE

    def __init__(self, raw: _GT):
        self._e = raw

    @classmethod
    def one(cls) -> GT:
        return cls(_GT.one())

    def __mul__(self, other: GT) -> GT:
        return GT(self._e * other._e)

    def __pow__(self, k: int) -> GT:
        k %= ORDER
        result, base = _GT.one(), self._e
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return GT(result)

    def inverse(self) -> GT:
        return self ** (ORDER - 1)

    def __truediv__(self, other: GT) -> GT:
        return self * other.inverse()

    def __eq__(self, other):
        return isinstance(other, GT) and self._e == other._e

    def __hash__(self):
        return hash(self.to_bytes())

    def is_one(self) -> bool:
        return self._e == _GT.one()

    def to_bytes(self) -> bytes:
        # the binding exposes Fq12 coordinates only through its hex repr
        return bytes.fromhex(str(self._e))


_G1_GEN = G1(G1Point())
_G1_ID = G1(G1Point.identity())
_G2_GEN = G2(G2Point())
_G2_ID = G2(G2Point.identity())
_INFINITY_FLAG = 0x40
_G1_ID_BYTES = _G1_ID.to_bytes()
_G2_ID_BYTES = _G2_ID.to_bytes()


def pair(a: G1, b: G2) -> GT:
    return GT(_GT.pairing(a._p, b._p))


def multi_pair(g1s, g2s) -> GT:
    """Product of pairings sharing one final exponentiation."""
    g1s, g2s = list(g1s), list(g2s)
    if len(g1s) != len(g2s):
        raise ValueError("length mismatch")
    return GT(_GT.multi_pairing([a._p for a in g1s], [b._p for b in g2s]))


def msm(points, scalars) -> G1:
    points, scalars = list(points), list(scalars)
    if len(points) != len(scalars):
        raise ValueError(f"msm length mismatch: {len(points)} points, {len(scalars)} scalars")
    if not points:
        return _G1_ID
    if len(points) < 3:
        acc = _G1_ID
        for p, k in zip(points, scalars):
            acc = acc + p * k
        return acc
    return G1(G1Point.multiexp_unchecked([p._p for p in points], [_fr(k) for k in scalars]))


def msm_g2(points, scalars) -> G2:
    points, scalars = list(points), list(scalars)
    if len(points) != len(scalars):
        raise ValueError("msm length mismatch")
    if not points:
        return _G2_ID
    return G2(G2Point.multiexp_unchecked([p._p for p in points], [_fr(k) for k in scalars]))


class FixedBase:
    """Precomputed 8-bit window table for repeated multiplication of one base.

    A multiplication costs at most 32 additions, which is far cheaper than the
    backend's generic scalar multiplication.  Works for G1 and G2 points.
    """

    __slots__ = ("point", "_rows", "_wrap", "_zero")
    _WINDOWS = 32

    def __init__(self, point):
        self.point = point
        self._wrap = type(point)
        self._zero = point.identity()
        rows = []
        p = point._p
        zero = self._zero._p
        for _ in range(self._WINDOWS):
            row = [zero]
            acc = zero
            for _ in range(255):
                acc = acc + p
                row.append(acc)
            rows.append(row)
            p = acc + p
        self._rows = rows

    def __mul__(self, k: int):
        return fixed_msm([self], [k])


def fixed_msm(tables, scalars):
    """Sum of ``scalars[i] * tables[i].point`` using precomputed tables."""
    acc = None
    tables = list(tables)
    for table, k in zip(tables, scalars, strict=True):
        k %= ORDER
        rows = table._rows
        w = 0
        while k:
            d = k & 0xFF
            if d:
                acc = rows[w][d] if acc is None else acc + rows[w][d]
            k >>= 8
            w += 1
    if not tables:
        return _G1_ID
    if acc is None:
        return tables[0]._zero
    return tables[0]._wrap(acc)


@lru_cache(maxsize=None)
def fixed_base(point) -> FixedBase:
    return FixedBase(point)


@dataclass(frozen=True)
class GroupParams:
    """Generators plus the six message bases and blinding base for commitments."""

    curve: str
    g: G1
    g2: G2
    bases: tuple
    h: G1

    @classmethod
    def default(cls) -> GroupParams:
        return _default_params()

    def to_bytes(self) -> bytes:
        out = bytearray([CURVE_ID])
        out += self.g.to_bytes() + self.g2.to_bytes()
        for b in self.bases:
            out += b.to_bytes()
        out += self.h.to_bytes()
        return bytes(out)

    @property
    def g_table(self) -> FixedBase:
        return fixed_base(self.g)

    @property
    def h_table(self) -> FixedBase:
        return fixed_base(self.h)


@lru_cache(maxsize=1)
def _default_params() -> GroupParams:
    bases = tuple(G1.hash_to_point(f"pisces/base/{j}".encode()) for j in range(1, 7))
    h = G1.hash_to_point(b"pisces/base/h")
    return GroupParams(CURVE_NAME, G1.generator(), G2.generator(), bases, h)
