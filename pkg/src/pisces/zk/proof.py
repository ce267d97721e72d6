"""AND-composition of clauses under one Fiat-Shamir challenge.

Each clause section of a proof carries its auxiliary points, its G1
first-round messages and its response scalars; the proof ends with the
shared challenge.  The verifier re-derives the challenge and then checks
every G1 verification equation at once through a random linear combination
(one multi-exponentiation).  Scalar and pairing first-round messages are
cheap to rebuild exactly, so they are recomputed instead of sent.
"""

from __future__ import annotations

import logging
import secrets
from dataclasses import dataclass

from ..encoding import Reader, Writer
from ..group import (
    FS_TAG,
    G1,
    ORDER,
    DecodeError,
    FixedBase,
    GroupParams,
    hash_to_scalar,
    msm,
    random_scalar,
)
from .clauses import CLAUSE_TYPES, Equal, Opening, PublicSlot, WitnessError, _Ctx, evaluate

log = logging.getLogger(__name__)


class StatementError(ValueError):
    pass


@dataclass(frozen=True)
class Statement:
    clauses: tuple
    params: GroupParams

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(self.clauses))
        owner, public = {}, {}
        for cl in self.clauses:
            for s in cl.owned():
                if s in owner:
                    raise StatementError(f"slot {s} owned twice")
                owner[s] = cl
        for cl in self.clauses:
            for s in cl.references():
                if s not in owner:
                    raise StatementError(f"clause {type(cl).__name__} references undeclared slot {s}")
            if isinstance(cl, PublicSlot):
                if not isinstance(owner[cl.slot], Opening) or cl.slot.endswith(".r"):
                    raise StatementError(f"only commitment message slots can be public: {cl.slot}")
                if cl.slot in public:
                    raise StatementError(f"slot {cl.slot} made public twice")
                public[cl.slot] = cl.value % ORDER
        for cl in self.clauses:
            if isinstance(cl, Equal) and (cl.a in public or cl.b in public):
                raise StatementError("Equal clauses take hidden slots only")
        object.__setattr__(self, "_owner", owner)
        object.__setattr__(self, "_public", public)

    @property
    def public(self) -> dict:
        return self._public

    def hidden_owned(self, clause):
        return [s for s in clause.owned() if s not in self._public]

    def to_bytes(self) -> bytes:
        w = Writer().u16(len(self.clauses))
        for cl in self.clauses:
            w.u8(cl.TAG)
            cl.encode(w)
        return w.getvalue()

    def _classes(self):
        """Union-find over Equal clauses: slot -> representative."""
        parent = {}

        def find(s):
            while parent.get(s, s) != s:
                s = parent[s]
            return s

        for cl in self.clauses:
            if isinstance(cl, Equal):
                ra, rb = find(cl.a), find(cl.b)
                if ra != rb:
                    parent[rb] = ra
        return {s: find(s) for s in self._owner}


@dataclass(frozen=True)
class ClauseProof:
    """One clause section: ``points`` = auxiliary points then G1 first-round messages."""

    tag: int
    points: tuple
    scalars: tuple


@dataclass(frozen=True)
class Proof:
    clauses: tuple
    challenge: int

    def to_bytes(self) -> bytes:
        w = Writer().u16(len(self.clauses))
        for cp in self.clauses:
            w.u8(cp.tag).u16(len(cp.points))
            for p in cp.points:
                w.point(p)
            w.u16(len(cp.scalars))
            for s in cp.scalars:
                w.scalar(s)
        w.scalar(self.challenge)
        return w.getvalue()

    @classmethod
    def read(cls, r: Reader) -> Proof:
        n = r.u16()
        parts = []
        for _ in range(n):
            tag = r.u8()
            if tag not in CLAUSE_TYPES:
                raise DecodeError(f"unknown clause tag {tag}")
            points = tuple(r.g1() for _ in range(r.u16()))
            scalars = tuple(r.scalar() for _ in range(r.u16()))
            parts.append(ClauseProof(tag, points, scalars))
        return cls(tuple(parts), r.scalar())

    @classmethod
    def from_bytes(cls, data: bytes) -> Proof:
        r = Reader(data)
        proof = cls.read(r)
        r.done()
        return proof

    def __len__(self):
        return len(self.to_bytes())


def _element_bytes(x) -> bytes:
    if isinstance(x, int):
        return x.to_bytes(32, "big")
    return x.to_bytes()


def challenge_for(statement: Statement, context: bytes, aux, first_round) -> int:
    w = Writer().blob(context).blob(statement.to_bytes())
    for pts, msgs in zip(aux, first_round):
        w.u16(len(pts))
        for p in pts:
            w.point(p)
        w.u16(len(msgs))
        for m in msgs:
            w.raw(_element_bytes(m))
    return hash_to_scalar(FS_TAG, w.getvalue())


class ProverSession:
    """Two-phase prover: ``commit`` then ``respond(challenge)``.

    ``prove`` drives it non-interactively; tests drive it interactively.
    """

    def __init__(self, statement: Statement, witnesses: dict, rng=None, check: bool = True):
        self.st = statement
        self.rng = rng
        w = {k: (v % ORDER if isinstance(v, int) else v) for k, v in witnesses.items()}
        for s, val in statement.public.items():
            if s in w and w[s] != val:
                if check:
                    raise WitnessError(f"{s} does not equal its public value")
            else:
                w[s] = val
        self.witness = w
        ctx = _Ctx(statement.params, {}, statement.public, witness=w)
        self.aux = []
        for cl in statement.clauses:
            try:
                self.aux.append(tuple(cl.prepare(ctx, rng)))
            except KeyError as exc:
                raise WitnessError(f"missing witness value {exc}") from None
        missing = [s for s in self._needed() if s not in w]
        if missing:
            raise WitnessError(f"missing witness values: {missing}")
        if check:
            for cl in statement.clauses:
                cl.check(ctx)
        self._first = None

    def _needed(self):
        needed = set()
        for cl in self.st.clauses:
            needed.update(cl.owned())
            needed.update(cl.references())
        return sorted(needed)

    def commit(self):
        classes = self.st._classes()
        nonce_of_class = {}
        nonces = {}
        for s, rep in classes.items():
            if s in self.st.public:
                continue
            if rep not in nonce_of_class:
                nonce_of_class[rep] = random_scalar(self.rng)
            nonces[s] = nonce_of_class[rep]
        self.nonces = nonces
        ctx = _Ctx(self.st.params, nonces, self.st.public, witness=self.witness)
        self._first, self._state = [], []
        for cl, aux in zip(self.st.clauses, self.aux):
            msgs, state = cl.commit(ctx, aux, self.rng)
            self._first.append(msgs)
            self._state.append(state)
        return self._first

    def respond(self, c: int) -> Proof:
        if self._first is None:
            raise RuntimeError("commit() must run before respond()")
        c %= ORDER
        ctx = _Ctx(self.st.params, self.nonces, self.st.public, c, witness=self.witness)
        parts = []
        for cl, aux, state, first in zip(self.st.clauses, self.aux, self._state, self._first):
            zs = [(self.nonces[s] + c * self.witness[s]) % ORDER for s in self.st.hidden_owned(cl)]
            zs.extend(cl.respond_extra(ctx, state, c))
            parts.append(ClauseProof(cl.TAG, tuple(aux) + _sent(first), tuple(zs)))
        return Proof(tuple(parts), c)


def _sent(first) -> tuple:
    return tuple(m for m in first if isinstance(m, G1))


def prove(statement: Statement, witnesses: dict, context: bytes, rng=None, check: bool = True) -> Proof:
    """Prove the statement.  Raises ``WitnessError`` for unsatisfied witnesses.

    ``check=False`` skips the satisfiability check; it exists only so tests can
    build deliberately invalid proofs.
    """
    session = ProverSession(statement, witnesses, rng, check)
    first = session.commit()
    c = challenge_for(statement, context, session.aux, first)
    return session.respond(c)


def _responses(statement: Statement, proof: Proof):
    """Map proof sections onto the statement; returns (aux, sent, extras, responses)."""
    if len(proof.clauses) != len(statement.clauses):
        raise DecodeError("clause count mismatch")
    aux, sent, extras, z = [], [], [], {}
    for cl, cp in zip(statement.clauses, proof.clauses):
        if cp.tag != cl.TAG:
            raise DecodeError("clause tag mismatch")
        if len(cp.points) != cl.n_points + cl.n_first:
            raise DecodeError("point count mismatch")
        hidden = statement.hidden_owned(cl)
        if len(cp.scalars) != len(hidden) + cl.n_extra():
            raise DecodeError("response count mismatch")
        z.update(zip(hidden, cp.scalars))
        aux.append(cp.points[:cl.n_points])
        sent.append(cp.points[cl.n_points:])
        extras.append(cp.scalars[len(hidden):])
    return aux, sent, extras, z


def _relations(statement: Statement, proof: Proof, c: int):
    aux, sent, extras, z = _responses(statement, proof)
    for cl in statement.clauses:
        if isinstance(cl, Equal) and z[cl.a] != z[cl.b]:
            raise WitnessError("equality constraint violated")
    ctx = _Ctx(statement.params, z, statement.public, c)
    rels = [cl.relations(ctx, a, e) for cl, a, e in zip(statement.clauses, aux, extras)]
    return aux, sent, rels


def recompute_first_round(statement: Statement, proof: Proof, c: int | None = None):
    """First-round messages implied by the responses (simulator and interactive checks)."""
    c = proof.challenge if c is None else c
    aux, _, rels = _relations(statement, proof, c)
    return aux, [[evaluate(r) if isinstance(r, list) else r for r in rs] for rs in rels]


class _Batch:
    """Accumulates ``sum rho_e * (terms_e - message_e)`` with random 128-bit ``rho_e``."""

    def __init__(self):
        self.coef = {}

    def add(self, terms, message: G1):
        rho = secrets.randbits(128) + 1
        for base, k in terms:
            self._add(base, rho * k)
        self._add(message, -rho)

    def _add(self, base, k):
        entry = self.coef.get(id(base))
        if entry is None:
            self.coef[id(base)] = [base, k]
        else:
            entry[1] += k

    def holds(self) -> bool:
        pts, ks = [], []
        for base, k in self.coef.values():
            k %= ORDER
            if k:
                pts.append(base.point if isinstance(base, FixedBase) else base)
                ks.append(k)
        return msm(pts, ks).is_identity()


def verify(statement: Statement, proof, context: bytes) -> bool:
    """True iff every clause holds under the re-derived shared challenge.

    Malformed input of any kind yields False.
    """
    try:
        if isinstance(proof, (bytes, bytearray, memoryview)):
            proof = Proof.from_bytes(bytes(proof))
        aux, sent, rels = _relations(statement, proof, proof.challenge)
        first, batch = [], _Batch()
        for rs, msgs in zip(rels, sent):
            msgs = iter(msgs)
            out = []
            for r in rs:
                if isinstance(r, list):
                    m = next(msgs)
                    if not isinstance(m, G1):
                        raise DecodeError("first-round message is not a G1 point")
                    batch.add(r, m)
                    out.append(m)
                else:
                    out.append(r)
            first.append(out)
        if challenge_for(statement, context, aux, first) != proof.challenge:
            return False
        return batch.holds()
    except (DecodeError, WitnessError, ValueError, KeyError, StopIteration) as exc:
        log.debug("proof rejected: %s", exc)
        return False


def check_transcript(statement: Statement, first_round, proof: Proof) -> bool:
    """Interactive-mode check: first-round messages match those implied by the responses."""
    try:
        _, expected = recompute_first_round(statement, proof)
    except (DecodeError, WitnessError, ValueError, KeyError):
        return False
    return expected == [list(m) for m in first_round]


def simulate(statement: Statement, c: int, rng=None):
    """Honest-verifier simulator: pick responses and challenge, solve for first-round messages.

    Auxiliary points are uniformly random, which is how they are distributed
    in honest proofs as well.
    """
    params = statement.params
    classes = statement._classes()
    z_class, parts = {}, []
    for cl in statement.clauses:
        hidden = statement.hidden_owned(cl)
        zs = []
        for s in hidden:
            rep = classes[s]
            if rep not in z_class:
                z_class[rep] = random_scalar(rng)
            zs.append(z_class[rep])
        zs.extend(random_scalar(rng) for _ in range(cl.n_extra()))
        aux = tuple(params.h * random_scalar(rng, nonzero=True) for _ in range(cl.n_points))
        placeholder = (G1.identity(),) * cl.n_first
        parts.append(ClauseProof(cl.TAG, aux + placeholder, tuple(zs)))
    draft = Proof(tuple(parts), c % ORDER)
    _, first = recompute_first_round(statement, draft)
    parts = [ClauseProof(cp.tag, cp.points[:cl.n_points] + _sent(f), cp.scalars)
             for cl, cp, f in zip(statement.clauses, draft.clauses, first)]
    return first, Proof(tuple(parts), draft.challenge)
