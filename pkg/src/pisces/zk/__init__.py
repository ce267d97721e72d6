"""Fiat-Shamir Sigma-protocol toolkit: one composed proof per transaction."""

from .clauses import (
    RANGE_BITS,
    Equal,
    Hidden,
    Linear,
    Opening,
    Product,
    PublicSlot,
    Range,
    SigPoK,
    WitnessError,
)
from .proof import (
    ClauseProof,
    Proof,
    ProverSession,
    Statement,
    StatementError,
    challenge_for,
    check_transcript,
    prove,
    recompute_first_round,
    simulate,
    verify,
)

__all__ = [
    "RANGE_BITS",
    "ClauseProof",
    "Equal",
    "Hidden",
    "Linear",
    "Opening",
    "Product",
    "Proof",
    "ProverSession",
    "PublicSlot",
    "Range",
    "SigPoK",
    "Statement",
    "StatementError",
    "WitnessError",
    "challenge_for",
    "check_transcript",
    "prove",
    "recompute_first_round",
    "simulate",
    "verify",
]
