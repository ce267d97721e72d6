"""Pedersen vector commitments over G1."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

from .group import G1, ORDER, GroupParams, fixed_base, fixed_msm


@dataclass(frozen=True)
class CommitmentKey:
    """Message bases plus an optional blinding base.

    The platform's default key uses the hash-derived bases ``g_1..g_6, h``;
    each PS public key also yields a key ``(Y_1..Y_r; g)`` so that the
    resulting commitment can be blind-signed.
    """

    bases: tuple
    blinding: G1 | None

    @classmethod
    def pedersen(cls, params: GroupParams | None = None, slots: int = 6) -> CommitmentKey:
        params = params or GroupParams.default()
        if not 1 <= slots <= len(params.bases):
            raise ValueError(f"at most {len(params.bases)} commitment slots, got {slots}")
        return cls(params.bases[:slots], params.h)

    def __len__(self):
        return len(self.bases)

    @cached_property
    def encoding(self) -> bytes:
        """Canonical bytes of the bases (blinding base last, when present)."""
        out = b"".join(b.to_bytes() for b in self.bases)
        if self.blinding is not None:
            out += self.blinding.to_bytes()
        return out

    def tables(self):
        tabs = [fixed_base(b) for b in self.bases]
        if self.blinding is not None:
            tabs.append(fixed_base(self.blinding))
        return tabs

    def commit_point(self, messages, randomness: int = 0) -> G1:
        messages = list(messages)
        if len(messages) > len(self.bases):
            raise ValueError(f"too many messages: {len(messages)} > {len(self.bases)} bases")
        tabs = [fixed_base(b) for b in self.bases[:len(messages)]]
        scalars = list(messages)
        if self.blinding is not None:
            tabs.append(fixed_base(self.blinding))
            scalars.append(randomness)
        elif randomness % ORDER:
            raise ValueError("key has no blinding base")
        return fixed_msm(tabs, scalars)


@dataclass(frozen=True)
class PedersenCommitment:
    """A commitment point, optionally with its opening (prover side only)."""

    point: G1
    messages: tuple | None = field(default=None, compare=False)
    randomness: int | None = field(default=None, compare=False)

    def public(self) -> PedersenCommitment:
        return replace(self, messages=None, randomness=None)

    @property
    def has_opening(self) -> bool:
        return self.messages is not None

    def __add__(self, other: PedersenCommitment) -> PedersenCommitment:
        point = self.point + other.point
        if not (self.has_opening and other.has_opening):
            return PedersenCommitment(point)
        n = max(len(self.messages), len(other.messages))
        a = list(self.messages) + [0] * (n - len(self.messages))
        b = list(other.messages) + [0] * (n - len(other.messages))
        msgs = tuple((x + y) % ORDER for x, y in zip(a, b))
        return PedersenCommitment(point, msgs, (self.randomness + other.randomness) % ORDER)

    def opens_to(self, key: CommitmentKey, messages, randomness: int) -> bool:
        return key.commit_point(messages, randomness) == self.point


def pedersen_commit(messages, randomness: int, key: CommitmentKey | None = None) -> PedersenCommitment:
    key = key or CommitmentKey.pedersen()
    messages = tuple(m % ORDER for m in messages)
    point = key.commit_point(messages, randomness)
    return PedersenCommitment(point, messages, randomness % ORDER)
