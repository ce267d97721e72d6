"""Adversarial request generators.

Each generator builds a well-formed request that breaks exactly one rule
and names the error the platform must answer with.  Dishonest proofs are
produced by a wallet clone that skips the prover's own satisfiability check.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

from .platform import Platform
from .protocol import NUMERAIRE, ProtocolError
from .ps import ps_keygen, ps_sign
from .records import PriceCredential
from .user import UserWallet
from .zk import prove


@dataclass(frozen=True)
class Attack:
    name: str
    request: object
    expect: str


@dataclass(frozen=True)
class AttackResult:
    name: str
    expect: str
    code: str | None  # None when the platform accepted the request
    unchanged: bool

    @property
    def passed(self) -> bool:
        return self.code == self.expect and self.unchanged


class Cheater(UserWallet):
    """A wallet clone that proves whatever it is given."""

    omit_accrual = False

    @classmethod
    def clone(cls, wallet: UserWallet) -> Cheater:
        c = cls.__new__(cls)
        c.__dict__.update(wallet.__dict__)
        c.assets = dict(wallet.assets)
        c.locked = set(wallet.locked)
        c.used_nonces = set(wallet.used_nonces)
        c.rng = copy.deepcopy(wallet.rng) if wallet.rng is not None else None
        return c

    def _prove(self, stmt, witness, ctx):
        return prove(stmt, witness, ctx, self.rng, check=False)

    def _accrue(self, reg, name, k, buy, sell):
        if self.omit_accrual:
            return reg.cp1, reg.cp2
        return UserWallet._accrue(reg, name, k, buy, sell)


class AdversaryEnv:
    """Supplies registered, funded wallets (reusing a scenario's where possible)."""

    def __init__(self, runner):
        self.runner = runner
        self._fresh = 0

    @property
    def platform(self) -> Platform:
        return self.runner.platform

    def _new_user(self) -> str:
        self._fresh += 1
        return f"adversary-{self._fresh}"

    def registered(self, exclude=()) -> UserWallet:
        for user, w in self.runner.wallets.items():
            if w.registration is not None and user not in exclude and not w.locked:
                return w
        user = self._new_user()
        self.runner.step({"op": "join", "user": user})
        return self.runner.wallets[user]

    def funded(self, crypto: bool = False, min_amount: int = 2):
        """A wallet and one of its asset records (non-numeraire when ``crypto``)."""
        for w in self.runner.wallets.values():
            if w.registration is None or w.locked:
                continue
            for a in w.assets.values():
                if a.amt >= min_amount and (not crypto or a.name != NUMERAIRE):
                    return w, a
        user = self._new_user()
        name = 1 if crypto and self.platform.pub.n_assets > 1 else NUMERAIRE
        self.runner.step({"op": "join", "user": user})
        self.runner.step({"op": "deposit", "user": user, "asset": name, "amount": 1000})
        w = self.runner.wallets[user]
        return w, next(iter(w.assets.values()))


def _creds(w: UserWallet, i: int, j: int):
    return w.price(i), w.price(j)


def gen_balance(env: AdversaryEnv) -> Attack:
    """Exchange more units than the record holds (leftover goes negative)."""
    w, asset = env.funded()
    c = Cheater.clone(w)
    k = asset.amt + 1
    req, _ = c._build_exchange(w.registration, asset, asset.name, k, k, *_creds(w, asset.name, asset.name))
    return Attack("balance", req, "invalid_proof")


def gen_fairness(env: AdversaryEnv) -> Attack:
    """Receive one unit more than the value given up pays for."""
    w, asset = env.funded()
    c = Cheater.clone(w)
    req, _ = c._build_exchange(w.registration, asset, asset.name, 1, 2, *_creds(w, asset.name, asset.name))
    return Attack("fairness", req, "invalid_proof")


def gen_price_freshness(env: AdversaryEnv) -> Attack:
    """Build against last epoch's credentials after the platform moved on."""
    w, asset = env.funded()
    stale = Cheater.clone(w)
    prices = [env.platform.prices[i] for i in range(env.platform.pub.n_assets)]
    env.runner.step({"op": "publish", "prices": prices})
    req, _ = UserWallet.build_exchange(stale, asset, asset.name, 1)
    return Attack("price_freshness", req, "stale_epoch")


def gen_nonce_reuse(env: AdversaryEnv) -> Attack:
    """Replay an accepted spending request verbatim."""
    w, asset = env.funded(min_amount=0)
    env.runner.step({"op": "withdraw", "user": _user_of(env, w), "asset": asset.name, "amount": 0})
    return Attack("nonce_reuse", env.runner.last_request, "double_spend")


def gen_usk_mismatch(env: AdversaryEnv) -> Attack:
    """Spend someone else's asset record under one's own registration."""
    owner, asset = env.funded()
    thief = env.registered(exclude={_user_of(env, owner)})
    c = Cheater.clone(thief)
    req, _ = c._build_exchange(thief.registration, asset, asset.name, 1, 1, *_creds(thief, asset.name, asset.name))
    return Attack("usk_mismatch", req, "invalid_proof")


def gen_cp_accrual(env: AdversaryEnv) -> Attack:
    """Exchange a crypto asset without adding to cost and gain."""
    w, asset = env.funded(crypto=True)
    c = Cheater.clone(w)
    c.omit_accrual = True
    req, _ = c._build_exchange(w.registration, asset, asset.name, 1, 1, *_creds(w, asset.name, asset.name))
    return Attack("cp_accrual", req, "invalid_proof")


def gen_withdraw_overdraft(env: AdversaryEnv) -> Attack:
    """Withdraw more than the record holds."""
    w, asset = env.funded()
    c = Cheater.clone(w)
    price = w.price(asset.name).pr
    req, _ = c._build_withdraw(w.registration, asset, asset.amt + 1, "adversary:payout", price)
    return Attack("withdraw_overdraft", req, "invalid_proof")


def gen_forged_price(env: AdversaryEnv) -> Attack:
    """Use a price credential signed by a key other than the platform's."""
    w, asset = env.funded()
    c = Cheater.clone(w)
    i = asset.name
    cred_i = w.price(i)
    fake_key = ps_keygen(env.platform.pub.params, 3, c.rng)
    fake = PriceCredential(w.epoch, i, 1, ps_sign(fake_key, (w.epoch, i, 1), c.rng))
    req, _ = c._build_exchange(w.registration, asset, i, 1, cred_i.pr, cred_i, fake)
    return Attack("forged_price", req, "invalid_proof")


def gen_settlement_mismatch(env: AdversaryEnv) -> Attack:
    """Claim more than the matching incoming transfer carried."""
    w = env.registered()
    ref = env.platform.settle_incoming(NUMERAIRE, 100, "adversary")
    req, _ = w.build_deposit(NUMERAIRE, 101, ref)
    return Attack("settlement_mismatch", req, "settlement_mismatch")


def gen_deposit_replay(env: AdversaryEnv) -> Attack:
    """Credit an already credited incoming transfer a second time."""
    w = env.registered()
    ref = env.platform.settle_incoming(NUMERAIRE, 100, "adversary")
    req, pending = w.build_deposit(NUMERAIRE, 100, ref)
    w.finalize(pending, env.platform.handle(req))
    again, _ = w.build_deposit(NUMERAIRE, 100, ref)
    return Attack("deposit_replay", again, "double_spend")


def gen_duplicate_join(env: AdversaryEnv) -> Attack:
    """Register the same user key twice."""
    w = env.registered()
    c = Cheater.clone(w)
    c.registration = None
    req, _ = c.build_join()
    return Attack("duplicate_join", req, "already_registered")


def _user_of(env: AdversaryEnv, w: UserWallet) -> str:
    return next(u for u, x in env.runner.wallets.items() if x is w)


GENERATORS = {
    "balance": gen_balance,
    "fairness": gen_fairness,
    "price_freshness": gen_price_freshness,
    "nonce_reuse": gen_nonce_reuse,
    "usk_mismatch": gen_usk_mismatch,
    "cp_accrual": gen_cp_accrual,
    "withdraw_overdraft": gen_withdraw_overdraft,
    "forged_price": gen_forged_price,
    "settlement_mismatch": gen_settlement_mismatch,
    "deposit_replay": gen_deposit_replay,
    "duplicate_join": gen_duplicate_join,
}


def run_attack(platform: Platform, attack: Attack) -> AttackResult:
    """Submit the attack; the platform must reject it and leave its state untouched."""
    before = platform.snapshot()
    try:
        platform.handle(attack.request)
        code = None
    except ProtocolError as exc:
        code = exc.code
    return AttackResult(attack.name, attack.expect, code, platform.snapshot() == before)
