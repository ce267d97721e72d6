"""Atomic clauses of a composed statement.

A clause *owns* zero or more named slots (witness variables).  Responses for
owned, hidden slots travel inside that clause's section of the proof; other
clauses refer to slots by name.  Slots named by ``PublicSlot`` are revealed
and never get a response.

Every clause knows how to

* ``prepare``: (prover) derive auxiliary points and internal witnesses,
* ``check``: (prover) confirm the witness satisfies it,
* ``commit``: (prover) compute first-round messages from nonces,
* ``respond_extra``: (prover) produce clause-specific response scalars,
* ``relations``: (verifier) express each first-round message through the
  responses, as a term list ``[(base, k), ...]`` for G1 messages or as a
  plain value (scalar, GT) that the verifier computes outright.

G1 first-round messages travel in the proof (``n_first`` per clause) so the
verifier can check all of them with one random linear combination.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..commit import CommitmentKey
from ..encoding import Writer
from ..group import (
    G1,
    ORDER,
    FixedBase,
    GroupParams,
    fixed_base,
    fixed_msm,
    msm,
    multi_pair,
    pair,
    random_scalar,
)
from ..ps import PSPublicKey, PSSignature, ps_randomize, ps_verify

RANGE_BITS = 32


class WitnessError(ValueError):
    """The supplied witness does not satisfy the statement."""


class _Ctx:
    """Slot lookups shared by prover and verifier code paths.

    ``values`` maps slot -> scalar (nonces while the prover commits, responses
    for the verifier); ``witness`` holds the prover's secrets; ``public`` maps
    revealed slots to their values.
    """

    def __init__(self, params: GroupParams, values: dict, public: dict, challenge: int = 0, witness=None):
        self.params = params
        self.values = values
        self.public = public
        self.c = challenge
        self.witness = witness if witness is not None else {}

    @property
    def G(self) -> FixedBase:
        return fixed_base(self.params.bases[0])

    @property
    def H(self) -> FixedBase:
        return fixed_base(self.params.h)

    def combine(self, terms) -> G1:
        """Sum base*value over hidden slots; bases are FixedBase or plain G1."""
        tabs, ks, acc = [], [], G1.identity()
        for base, slot in terms:
            if slot in self.public:
                continue
            k = self.values[slot]
            if isinstance(base, FixedBase):
                tabs.append(base)
                ks.append(k)
            else:
                acc = acc + base * k
        if tabs:
            acc = acc + fixed_msm(tabs, ks)
        return acc

    def relation(self, lhs, terms) -> list:
        """Verifier side of ``lhs = sum base*slot``: terms of ``sum base*z - c*(lhs - public part)``.

        ``lhs`` is a point or a term list.
        """
        c = self.c
        if isinstance(lhs, G1):
            lhs = [(lhs, 1)]
        out = [(b, -c * k) for b, k in lhs]
        for base, s in terms:
            if s in self.public:
                out.append((base, c * self.public[s]))
            else:
                out.append((base, self.values[s]))
        return out


def evaluate(terms) -> G1:
    """Sum of ``base*k`` over a term list."""
    tabs, tks, pts, pks = [], [], [], []
    for base, k in terms:
        if isinstance(base, FixedBase):
            tabs.append(base)
            tks.append(k)
        else:
            pts.append(base)
            pks.append(k)
    acc = msm(pts, pks)
    if tabs:
        acc = acc + fixed_msm(tabs, tks)
    return acc


def _label_bytes(w: Writer, label: str):
    w.text(label)


@dataclass(frozen=True)
class Opening:
    """Knowledge of an opening of ``point`` under ``key``.

    Owns ``label.0 .. label.{n-1}`` and, for blinded keys, ``label.r``.
    """

    label: str
    point: G1
    key: CommitmentKey
    TAG = 1

    def owned(self):
        slots = [f"{self.label}.{j}" for j in range(len(self.key))]
        if self.key.blinding is not None:
            slots.append(f"{self.label}.r")
        return slots

    def references(self):
        return []

    def _terms(self):
        terms = [(fixed_base(b), f"{self.label}.{j}") for j, b in enumerate(self.key.bases)]
        if self.key.blinding is not None:
            terms.append((fixed_base(self.key.blinding), f"{self.label}.r"))
        return terms

    def encode(self, w: Writer):
        _label_bytes(w, self.label)
        w.point(self.point).u8(len(self.key)).u8(self.key.blinding is not None).raw(self.key.encoding)

    n_points = 0
    n_first = 1

    def n_extra(self):
        return 0

    def prepare(self, ctx: _Ctx, rng):
        return ()

    def check(self, ctx: _Ctx):
        msgs = [ctx.witness[s] for s in self.owned()[:len(self.key)]]
        r = ctx.witness.get(f"{self.label}.r", 0)
        if self.key.commit_point(msgs, r) != self.point:
            raise WitnessError(f"{self.label}: opening does not match commitment")

    def commit(self, ctx: _Ctx, aux, rng):
        return [ctx.combine(self._terms())], None

    def respond_extra(self, ctx: _Ctx, state, c):
        return []

    def relations(self, ctx: _Ctx, aux, extra):
        return [ctx.relation(self.point, self._terms())]


@dataclass(frozen=True)
class PublicSlot:
    """The slot equals a revealed value (folded into every equation using it)."""

    slot: str
    value: int
    TAG = 2
    n_points = 0
    n_first = 0

    def owned(self):
        return []

    def references(self):
        return [self.slot]

    def encode(self, w: Writer):
        w.text(self.slot).scalar(self.value)

    def n_extra(self):
        return 0

    def prepare(self, ctx, rng):
        return ()

    def check(self, ctx: _Ctx):
        pass

    def commit(self, ctx, aux, rng):
        return [], None

    def respond_extra(self, ctx, state, c):
        return []

    def relations(self, ctx, aux, extra):
        return []


@dataclass(frozen=True)
class Equal:
    """Two hidden slots carry the same value; checked as equality of responses."""

    a: str
    b: str
    TAG = 3
    n_points = 0
    n_first = 0

    def owned(self):
        return []

    def references(self):
        return [self.a, self.b]

    def encode(self, w: Writer):
        w.text(self.a).text(self.b)

    def n_extra(self):
        return 0

    def prepare(self, ctx, rng):
        return ()

    def check(self, ctx: _Ctx):
        if ctx.witness[self.a] != ctx.witness[self.b]:
            raise WitnessError(f"{self.a} != {self.b}")

    def commit(self, ctx, aux, rng):
        return [], None

    def respond_extra(self, ctx, state, c):
        return []

    def relations(self, ctx, aux, extra):
        return []


@dataclass(frozen=True)
class Linear:
    """``sum coef_k * slot_k = constant`` over the scalar field.

    The first-round message is the scalar ``sum coef_k * nonce_k``.
    """

    terms: tuple
    constant: int
    TAG = 4
    n_points = 0
    n_first = 0

    def owned(self):
        return []

    def references(self):
        return [s for _, s in self.terms]

    def encode(self, w: Writer):
        w.u8(len(self.terms))
        for coef, slot in self.terms:
            w.scalar(coef).text(slot)
        w.scalar(self.constant)

    def n_extra(self):
        return 0

    def prepare(self, ctx, rng):
        return ()

    def check(self, ctx: _Ctx):
        total = sum(coef * ctx.witness[s] for coef, s in self.terms) % ORDER
        if total != self.constant % ORDER:
            raise WitnessError("linear relation does not hold")

    def _hidden_sum(self, ctx: _Ctx):
        return sum(coef * ctx.values[s] for coef, s in self.terms if s not in ctx.public) % ORDER

    def commit(self, ctx, aux, rng):
        return [self._hidden_sum(ctx)], None

    def respond_extra(self, ctx, state, c):
        return []

    def relations(self, ctx, aux, extra):
        pub = sum(coef * ctx.public[s] for coef, s in self.terms if s in ctx.public)
        return [(self._hidden_sum(ctx) - ctx.c * (self.constant - pub)) % ORDER]


@dataclass(frozen=True)
class Product:
    """``label.v = a * b`` for hidden slots a, b.

    Auxiliary commitments ``C_b = G*b + H*s`` and ``C_p = C_b*a + H*u`` are
    carried in the proof; ``C_p`` is then opened as ``G*v + H*w`` with
    ``w = a*s + u``.  Owns ``label.v``, ``label.s``, ``label.u``, ``label.w``.
    """

    label: str
    a: str
    b: str
    TAG = 5
    n_points = 2
    n_first = 3

    def owned(self):
        return [f"{self.label}.{x}" for x in "vsuw"]

    def references(self):
        return [self.a, self.b]

    def encode(self, w: Writer):
        w.text(self.label).text(self.a).text(self.b)

    def n_extra(self):
        return 0

    def _equations(self, ctx: _Ctx, aux):
        c_b, c_p = aux
        L = self.label
        return [
            (c_b, [(ctx.G, self.b), (ctx.H, f"{L}.s")]),
            (c_p, [(c_b, self.a), (ctx.H, f"{L}.u")]),
            (c_p, [(ctx.G, f"{L}.v"), (ctx.H, f"{L}.w")]),
        ]

    def prepare(self, ctx: _Ctx, rng):
        v = ctx.witness
        a, b = v[self.a], v[self.b]
        s, u = random_scalar(rng), random_scalar(rng)
        L = self.label
        v[f"{L}.s"], v[f"{L}.u"] = s, u
        v[f"{L}.v"] = a * b % ORDER
        v[f"{L}.w"] = (a * s + u) % ORDER
        c_b = fixed_msm([ctx.G, ctx.H], [b, s])
        c_p = c_b * a + ctx.H * u
        return (c_b, c_p)

    def check(self, ctx: _Ctx):
        v = ctx.witness
        if v[f"{self.label}.v"] != v[self.a] * v[self.b] % ORDER:
            raise WitnessError(f"{self.label}: product mismatch")

    def commit(self, ctx, aux, rng):
        return [ctx.combine(terms) for _, terms in self._equations(ctx, aux)], None

    def respond_extra(self, ctx, state, c):
        return []

    def relations(self, ctx, aux, extra):
        return [ctx.relation(lhs, terms) for lhs, terms in self._equations(ctx, aux)]


@dataclass(frozen=True)
class Range:
    """``label.v - offset`` lies in ``[0, 2**bits)``.

    Bit decomposition: one commitment ``C_k = G*b_k + H*r_k`` per bit with a
    two-branch OR-proof that it opens to 0 or 1, and a tie equation
    ``sum 2^k C_k + G*offset = G*v + H*rho``.  Owns ``label.v`` and
    ``label.rho``; per-bit extras are ``(c0, z0, z1)``.
    """

    label: str
    offset: int = 0
    bits: int = RANGE_BITS
    TAG = 6

    @property
    def n_points(self):
        return self.bits

    @property
    def n_first(self):
        return 2 * self.bits + 1

    def owned(self):
        return [f"{self.label}.v", f"{self.label}.rho"]

    def references(self):
        return []

    def encode(self, w: Writer):
        w.text(self.label).scalar(self.offset).u8(self.bits)

    def n_extra(self):
        return 3 * self.bits

    def _tie(self, ctx: _Ctx, aux):
        lhs = [(ck, 1 << k) for k, ck in enumerate(aux)] + [(ctx.G, self.offset)]
        return lhs, [(ctx.G, f"{self.label}.v"), (ctx.H, f"{self.label}.rho")]

    def prepare(self, ctx: _Ctx, rng):
        v = ctx.witness[f"{self.label}.v"]
        shifted = (v - self.offset) % ORDER
        bits = [(shifted >> k) & 1 for k in range(self.bits)]
        rs = [random_scalar(rng) for _ in range(self.bits)]
        G, H = ctx.G, ctx.H
        g_pt = G.point
        aux = []
        for b, r in zip(bits, rs):
            ck = H * r
            aux.append(ck + g_pt if b else ck)
        ctx.witness[f"{self.label}.rho"] = sum(r << k for k, r in enumerate(rs)) % ORDER
        ctx.witness[f"{self.label}._bits"] = (bits, rs)
        return tuple(aux)

    def check(self, ctx: _Ctx):
        shifted = (ctx.witness[f"{self.label}.v"] - self.offset) % ORDER
        if shifted >> self.bits:
            raise WitnessError(f"{self.label}: value out of range")

    def commit(self, ctx: _Ctx, aux, rng):
        bits, rs = ctx.witness[f"{self.label}._bits"]
        G, H = ctx.G, ctx.H
        first, state = [], []
        for b, r in zip(bits, rs):
            w = random_scalar(rng)
            c_sim, z_sim = random_scalar(rng), random_scalar(rng)
            real = H * w
            # simulated branch H*z - (C_k - G*j)*c with the opening of C_k known
            g_coef = -c_sim if b else c_sim
            sim = fixed_msm([H, G], [z_sim - r * c_sim, g_coef])
            first.extend((sim, real) if b else (real, sim))
            state.append((w, c_sim, z_sim))
        _, terms = self._tie(ctx, aux)
        first.append(ctx.combine(terms))
        return first, state

    def respond_extra(self, ctx: _Ctx, state, c):
        bits, rs = ctx.witness[f"{self.label}._bits"]
        out = []
        for b, r, (w, c_sim, z_sim) in zip(bits, rs, state):
            c_real = (c - c_sim) % ORDER
            z_real = (w + c_real * r) % ORDER
            if b:
                out.extend((c_sim, z_sim, z_real))
            else:
                out.extend((c_real, z_real, z_sim))
        return out

    def relations(self, ctx: _Ctx, aux, extra):
        G, H = ctx.G, ctx.H
        out = []
        for k, ck in enumerate(aux):
            c0, z0, z1 = extra[3 * k:3 * k + 3]
            c1 = (ctx.c - c0) % ORDER
            out.append([(H, z0), (ck, -c0)])
            out.append([(H, z1), (ck, -c1), (G, c1)])
        lhs, terms = self._tie(ctx, aux)
        out.append(ctx.relation(lhs, terms))
        return out


@dataclass(frozen=True)
class SigPoK:
    """Knowledge of a PS signature on the messages held in ``messages`` slots.

    The prover reveals a randomized ``(s1', s2')`` and proves
    ``e(s1', X + sum Y_j m_j + g2 t) = e(s2', g2)``.  Owns ``label.t``;
    the witness must supply the signature under ``label.sig``.
    """

    label: str
    pk: PSPublicKey
    messages: tuple
    TAG = 7
    n_points = 2
    n_first = 0

    def owned(self):
        return [f"{self.label}.t"]

    def references(self):
        return list(self.messages)

    def encode(self, w: Writer):
        w.text(self.label).blob(self.pk.to_bytes()).u8(len(self.messages))
        for s in self.messages:
            w.text(s)

    def n_extra(self):
        return 0

    def prepare(self, ctx: _Ctx, rng):
        sig = ctx.witness[f"{self.label}.sig"]
        if not isinstance(sig, PSSignature):
            raise WitnessError(f"{self.label}: missing signature witness")
        t = random_scalar(rng)
        ctx.witness[f"{self.label}.t"] = t
        rand = ps_randomize(sig, random_scalar(rng, nonzero=True), t)
        return (rand.sigma1, rand.sigma2)

    def check(self, ctx: _Ctx):
        msgs = [ctx.witness[s] for s in self.messages]
        if not ps_verify(self.pk, msgs, ctx.witness[f"{self.label}.sig"]):
            raise WitnessError(f"{self.label}: signature does not verify on the messages")

    def _hidden_g2(self, ctx: _Ctx):
        ys = [(j, ctx.values[s]) for j, s in enumerate(self.messages) if s not in ctx.public]
        return self.pk.g2_sum(0, ys, ctx.values[f"{self.label}.t"])

    def commit(self, ctx: _Ctx, aux, rng):
        return [pair(aux[0], self._hidden_g2(ctx))], None

    def respond_extra(self, ctx, state, c):
        return []

    def relations(self, ctx: _Ctx, aux, extra):
        s1, s2 = aux
        if s1.is_identity():
            raise WitnessError("degenerate signature")
        ys = [(j, ctx.public[s]) for j, s in enumerate(self.messages) if s in ctx.public]
        pub = self.pk.g2_sum(1, ys)
        c = ctx.c
        return [multi_pair([s1, s1 * c, -(s2 * c)], [self._hidden_g2(ctx), pub, self.pk.g2])]


@dataclass(frozen=True)
class Hidden:
    """A free hidden scalar ``label.v``, committed as ``G*v + H*r`` inside the proof.

    Lets a statement introduce auxiliary witnesses (an inverse, say) that no
    transaction commitment carries.  Owns ``label.v`` and ``label.r``.
    """

    label: str
    TAG = 8
    n_points = 1
    n_first = 1

    def owned(self):
        return [f"{self.label}.v", f"{self.label}.r"]

    def references(self):
        return []

    def encode(self, w: Writer):
        w.text(self.label)

    def n_extra(self):
        return 0

    def _terms(self, ctx: _Ctx):
        return [(ctx.G, f"{self.label}.v"), (ctx.H, f"{self.label}.r")]

    def prepare(self, ctx: _Ctx, rng):
        r = random_scalar(rng)
        ctx.witness[f"{self.label}.r"] = r
        return (fixed_msm([ctx.G, ctx.H], [ctx.witness[f"{self.label}.v"], r]),)

    def check(self, ctx: _Ctx):
        pass

    def commit(self, ctx: _Ctx, aux, rng):
        return [ctx.combine(self._terms(ctx))], None

    def respond_extra(self, ctx, state, c):
        return []

    def relations(self, ctx: _Ctx, aux, extra):
        return [ctx.relation(aux[0], self._terms(ctx))]


CLAUSE_TYPES = {cls.TAG: cls for cls in (Opening, PublicSlot, Equal, Linear, Product, Range, SigPoK, Hidden)}
