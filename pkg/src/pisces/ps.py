"""Pointcheval-Sanders multi-message randomizable signatures.

Besides plain signing, the public key publishes the G1 bases ``Y_j = g*y_j``
so that a user can hand the signer a commitment ``C = g*t + sum Y_j*m_j`` and
receive a blind signature on the hidden messages.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass
from functools import cached_property

from .commit import CommitmentKey
from .encoding import Reader, Writer
from .group import (
    CURVE_ID,
    G1,
    G2,
    ORDER,
    DecodeError,
    GroupParams,
    fixed_base,
    fixed_msm,
    msm,
    msm_g2,
    multi_pair,
    random_scalar,
)

MAX_SLOTS = 5


class SignatureError(ValueError):
    pass


@dataclass(frozen=True)
class PSSecretKey:
    x: int
    ys: tuple

    def __repr__(self):
        return f"PSSecretKey(slots={len(self.ys)})"


@dataclass(frozen=True)
class PSPublicKey:
    g: G1
    g2: G2
    X2: G2
    Y2: tuple
    Y1: tuple

    @property
    def slots(self) -> int:
        return len(self.Y2)

    @cached_property
    def commitment_key(self) -> CommitmentKey:
        return CommitmentKey(tuple(self.Y1), self.g)

    def precompute(self) -> PSPublicKey:
        """Build fixed-base tables for the G2 elements.

        Costs roughly 60 ms per element once; afterwards every verification
        and signature proof against this key is several times faster.
        """
        tabs = tuple(fixed_base(p) for p in (self.X2, self.g2, *self.Y2))
        object.__setattr__(self, "_g2_tables", tabs)
        return self

    def g2_sum(self, x: int = 0, ys=(), t: int = 0) -> G2:
        """``X*x + sum Y_j*m + g2*t`` where ``ys`` yields ``(j, m)`` pairs."""
        ys = list(ys)
        tabs = self.__dict__.get("_g2_tables")
        if tabs is not None:
            sel = [tabs[0], tabs[1]] + [tabs[2 + j] for j, _ in ys]
            return fixed_msm(sel, [x, t] + [m for _, m in ys])
        pts, ks = [], []
        for p, k in [(self.X2, x), (self.g2, t)] + [(self.Y2[j], m) for j, m in ys]:
            if k % ORDER:
                pts.append(p)
                ks.append(k)
        return msm_g2(pts, ks)

    def to_bytes(self) -> bytes:
        return self._encoding

    @cached_property
    def _encoding(self) -> bytes:
        w = Writer().u8(CURVE_ID).u8(self.slots)
        w.point(self.g).point(self.g2).point(self.X2)
        for y in self.Y2:
            w.point(y)
        for y in self.Y1:
            w.point(y)
        return w.getvalue()

    @classmethod
    def read(cls, r: Reader) -> PSPublicKey:
        if r.u8() != CURVE_ID:
            raise DecodeError("public key is for a different curve")
        slots = r.u8()
        if not 1 <= slots <= MAX_SLOTS:
            raise DecodeError(f"bad slot count {slots}")
        g, g2, X2 = r.g1(), r.g2(), r.g2()
        Y2 = tuple(r.g2() for _ in range(slots))
        Y1 = tuple(r.g1() for _ in range(slots))
        return cls(g, g2, X2, Y2, Y1)

    @classmethod
    def from_bytes(cls, data: bytes) -> PSPublicKey:
        r = Reader(data)
        pk = cls.read(r)
        r.done()
        return pk


@dataclass(frozen=True)
class PSKeyPair:
    sk: PSSecretKey
    pk: PSPublicKey

    @property
    def slots(self) -> int:
        return self.pk.slots


@dataclass(frozen=True)
class PSSignature:
    sigma1: G1
    sigma2: G1

    def to_bytes(self) -> bytes:
        return self.sigma1.to_bytes() + self.sigma2.to_bytes()

    @classmethod
    def read(cls, r: Reader) -> PSSignature:
        return cls(r.g1(), r.g1())

    @classmethod
    def from_bytes(cls, data: bytes) -> PSSignature:
        r = Reader(data)
        sig = cls.read(r)
        r.done()
        return sig


def ps_keygen(params: GroupParams | None, slots: int, rng=None) -> PSKeyPair:
    if not 1 <= slots <= MAX_SLOTS:
        raise ValueError(f"slot count must be in [1, {MAX_SLOTS}], got {slots}")
    params = params or GroupParams.default()
    x = random_scalar(rng, nonzero=True)
    ys = tuple(random_scalar(rng, nonzero=True) for _ in range(slots))
    g_tab = fixed_base(params.g)
    pk = PSPublicKey(
        g=params.g,
        g2=params.g2,
        X2=params.g2 * x,
        Y2=tuple(params.g2 * y for y in ys),
        Y1=tuple(g_tab * y for y in ys),
    )
    return PSKeyPair(PSSecretKey(x, ys), pk)


def _check_slots(n_keys: int, messages) -> list:
    messages = [m % ORDER for m in messages]
    if len(messages) != n_keys:
        raise SignatureError(f"expected {n_keys} messages, got {len(messages)}")
    return messages


def _exponent(sk: PSSecretKey, messages) -> int:
    return (sk.x + sum(y * m for y, m in zip(sk.ys, messages))) % ORDER


def ps_sign(keypair: PSKeyPair, messages, rng=None) -> PSSignature:
    messages = _check_slots(keypair.slots, messages)
    u = random_scalar(rng, nonzero=True)
    sigma1 = fixed_base(keypair.pk.g) * u
    return PSSignature(sigma1, sigma1 * _exponent(keypair.sk, messages))


def ps_verify(pk: PSPublicKey, messages, sig: PSSignature) -> bool:
    try:
        messages = _check_slots(pk.slots, messages)
    except SignatureError:
        return False
    if sig.sigma1.is_identity():
        return False
    target = pk.g2_sum(1, enumerate(messages))
    return multi_pair([sig.sigma1, -sig.sigma2], [target, pk.g2]).is_one()


def ps_verify_batch(pk: PSPublicKey, items) -> bool:
    """Verify many ``(messages, signature)`` pairs under one key at once.

    Uses a random linear combination with 128-bit weights and moves the
    messages to the G1 side, so the pairing cost is ``slots + 2`` Miller
    loops however many signatures there are.  A batch containing an invalid
    signature passes with probability at most 2^-128.
    """
    s1s, s2s, rhos, cols = [], [], [], [[] for _ in range(pk.slots)]
    for messages, sig in items:
        try:
            messages = _check_slots(pk.slots, messages)
        except SignatureError:
            return False
        if sig.sigma1.is_identity():
            return False
        rho = secrets.randbits(128) + 1
        s1s.append(sig.sigma1)
        s2s.append(sig.sigma2)
        rhos.append(rho)
        for col, m in zip(cols, messages):
            col.append(rho * m)
    if not s1s:
        return True
    g1s = [msm(s1s, rhos), -msm(s2s, rhos)]
    g2s = [pk.X2, pk.g2]
    for y, col in zip(pk.Y2, cols):
        if any(k % ORDER for k in col):
            g1s.append(msm(s1s, col))
            g2s.append(y)
    return multi_pair(g1s, g2s).is_one()


def ps_randomize(sig: PSSignature, r: int, t: int = 0) -> PSSignature:
    """Return ``(s1*r, (s2 + s1*t)*r)``; with ``t != 0`` it verifies only with blinding ``t``."""
    r %= ORDER
    if r == 0:
        raise ValueError("randomizer must be non-zero")
    s1 = sig.sigma1
    return PSSignature(s1 * r, (sig.sigma2 + s1 * t) * r)


@dataclass(frozen=True)
class BlindIssuanceSession:
    """User-side state of one blind issuance: the hidden messages and blinding ``t``."""

    pk: PSPublicKey
    messages: tuple
    t: int
    commitment: G1


def blind_request(pk: PSPublicKey, messages, rng=None, t: int | None = None) -> BlindIssuanceSession:
    messages = tuple(_check_slots(pk.slots, messages))
    t = random_scalar(rng) if t is None else t % ORDER
    c = pk.commitment_key.commit_point(messages, t)
    return BlindIssuanceSession(pk, messages, t, c)


def blind_sign(keypair: PSKeyPair, commitment: G1, rng=None) -> PSSignature:
    """Signer side: ``(g*u, (X + C)*u)``.  The caller must have checked an opening proof for C."""
    u = random_scalar(rng, nonzero=True)
    g_tab = fixed_base(keypair.pk.g)
    return PSSignature(g_tab * u, (g_tab * keypair.sk.x + commitment) * u)


def unblind(session: BlindIssuanceSession, blinded: PSSignature) -> PSSignature:
    return PSSignature(blinded.sigma1, blinded.sigma2 - blinded.sigma1 * session.t)
