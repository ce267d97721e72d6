"""Platform side: setup, price feeds, transaction handlers, Verify and Check.

Every handler follows the same order: check the revealed nonces, verify the
proof against the statement rebuilt from public data, check the settlement
leg, blind-sign, and only then commit (persist nonces, append ledgers).  A
failure anywhere before the commit leaves the state untouched.
"""

from __future__ import annotations

import json
import logging
import random
import threading
from dataclasses import dataclass
from pathlib import Path

from .encoding import Reader, Writer
from .group import ORDER, DecodeError, GroupParams
from .protocol import (
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
    context,
    decode_request,
    deposit_header,
    deposit_statement,
    exchange_statement,
    file_statement,
    join_statement,
    withdraw_header,
    withdraw_statement,
)
from .ps import PSKeyPair, PSPublicKey, PSSecretKey, blind_sign, ps_sign
from .records import AMOUNT_LIMIT, ComplianceDoc, PriceCredential
from .storage import AppendLog, StateCorruptError
from .zk import verify

log = logging.getLogger(__name__)

DAY = 86_400
CHECK_WINDOW = 30 * DAY


# --- keys ---------------------------------------------------------------------


def _keypair_from_secret(params: GroupParams, x: int, ys) -> PSKeyPair:
    from .group import fixed_base

    g_tab = fixed_base(params.g)
    pk = PSPublicKey(params.g, params.g2, params.g2 * x, tuple(params.g2 * y for y in ys), tuple(g_tab * y for y in ys))
    return PSKeyPair(PSSecretKey(x, tuple(ys)), pk)


@dataclass(frozen=True)
class PlatformKeys:
    """Signing keys by record type: price (3 slots), reg (4), asset (5), comp (4)."""

    price: PSKeyPair
    reg: PSKeyPair
    asset: PSKeyPair
    comp: PSKeyPair

    @classmethod
    def generate(cls, params: GroupParams, rng=None) -> PlatformKeys:
        rng = rng or random.SystemRandom()
        pairs = []
        for slots in (3, 4, 5, 4):
            x = rng.randrange(1, ORDER)
            ys = [rng.randrange(1, ORDER) for _ in range(slots)]
            pairs.append(_keypair_from_secret(params, x, ys))
        return cls(*pairs)

    def public(self, params: GroupParams, assets) -> PlatformPublicKey:
        return PlatformPublicKey(params, self.price.pk, self.reg.pk, self.asset.pk, self.comp.pk, tuple(assets))

    def secret_bytes(self) -> bytes:
        w = Writer()
        for kp in (self.price, self.reg, self.asset, self.comp):
            w.u8(len(kp.sk.ys)).scalar(kp.sk.x)
            for y in kp.sk.ys:
                w.scalar(y)
        return w.getvalue()

    @classmethod
    def from_secret_bytes(cls, params: GroupParams, data: bytes) -> PlatformKeys:
        r = Reader(data)
        pairs = []
        for _ in range(4):
            n = r.u8()
            x = r.scalar()
            pairs.append(_keypair_from_secret(params, x, [r.scalar() for _ in range(n)]))
        r.done()
        return cls(*pairs)


# --- public state ---------------------------------------------------------------


@dataclass(frozen=True)
class PriceFeedUpdate:
    """Credentials for every listed asset at one epoch."""

    epoch: int
    credentials: tuple

    @property
    def prices(self) -> dict:
        return {c.name: c.pr for c in self.credentials}

    def to_bytes(self) -> bytes:
        w = Writer().u64(self.epoch).u32(len(self.credentials))
        for c in self.credentials:
            w.blob(c.to_bytes())
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> PriceFeedUpdate:
        r = Reader(data)
        epoch = r.u64()
        creds = tuple(PriceCredential.from_bytes(r.blob()) for _ in range(r.u32()))
        r.done()
        return cls(epoch, creds)


@dataclass(frozen=True)
class FlowEntry:
    """Public deposit (+) or withdrawal (-) of one coin."""

    timestamp: int
    name: int
    amount: int

    def to_bytes(self) -> bytes:
        sign = 1 if self.amount < 0 else 0
        return Writer().u64(self.timestamp).u32(self.name).u8(sign).u64(abs(self.amount)).getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> FlowEntry:
        r = Reader(data)
        ts, name, sign, amt = r.u64(), r.u32(), r.u8(), r.u64()
        r.done()
        return cls(ts, name, -amt if sign else amt)


SETTLE_IN = 1
SETTLE_OUT = 2
SETTLE_CLAIM = 3


@dataclass(frozen=True)
class SettlementEntry:
    """Simulated on-chain (or bank) transfer.  ``CLAIM`` entries mark a deposit as credited."""

    kind: int
    ref: int
    name: int
    amount: int
    address: str
    timestamp: int

    def to_bytes(self) -> bytes:
        w = Writer().u8(self.kind).u64(self.ref).u32(self.name).u64(self.amount)
        return w.text(self.address).u64(self.timestamp).getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> SettlementEntry:
        r = Reader(data)
        e = cls(r.u8(), r.u64(), r.u32(), r.u64(), r.text(), r.u64())
        r.done()
        return e


@dataclass(frozen=True)
class CoinReport:
    name: str
    reserve: int
    outflow: int
    passed: bool


@dataclass(frozen=True)
class LiquidityReport:
    now: int
    window: int
    coins: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.coins)

    @property
    def failing(self) -> list:
        return [c.name for c in self.coins if not c.passed]


def liquidity_check(flow, floats: dict, names, now: int, window: int = CHECK_WINDOW) -> LiquidityReport:
    """Reserve must cover the withdrawals of the trailing window, per coin."""
    last = None
    for e in flow:
        if last is not None and e.timestamp < last:
            raise ValueError("flow ledger timestamps are not monotone")
        last = e.timestamp
    reserve = {i: floats.get(i, 0) for i in range(len(names))}
    outflow = dict.fromkeys(reserve, 0)
    for e in flow:
        reserve[e.name] = reserve.get(e.name, 0) + e.amount
        if e.amount < 0 and now - window < e.timestamp <= now:
            outflow[e.name] = outflow.get(e.name, 0) - e.amount
    coins = tuple(CoinReport(names[i], reserve[i], outflow[i], reserve[i] >= outflow[i]) for i in sorted(reserve))
    return LiquidityReport(now, window, coins)


def authority_verify(pub: PlatformPublicKey, doc: ComplianceDoc, expected_au: int) -> bool:
    """The regulator's check: right audit period and a valid platform signature."""
    if doc.au != expected_au:
        return False
    return doc.verify(pub.comp)


# --- the platform ------------------------------------------------------------------


class _Observed:
    """Records which request fields the handler reads (view logging)."""

    def __init__(self, req, sink: set):
        object.__setattr__(self, "_req", req)
        object.__setattr__(self, "_sink", sink)

    def __getattr__(self, name):
        self._sink.add(name)
        return getattr(self._req, name)


class Platform:
    """Platform state plus the five transaction handlers.

    Pass ``state_dir`` to persist; ``Platform.open`` restarts from it.
    ``seed`` makes all platform randomness deterministic (tests, scenarios).
    """

    def __init__(self, keys: PlatformKeys, pub: PlatformPublicKey, *, au: int = 0, floats=None,
                 state_dir=None, rng=None, fsync: bool = True):
        self.keys = keys
        self.pub = pub
        self.au = au
        self.floats = dict(floats or {})
        self.rng = rng or random.SystemRandom()
        self.state_dir = Path(state_dir) if state_dir is not None else None
        self._lock = threading.Lock()
        self.view_log: list | None = None

        def _log(name):
            return AppendLog(self.state_dir / name if self.state_dir else None, fsync=fsync)

        self._spent_log = _log("spent.log")
        self._users_log = _log("users.log")
        self._flow_log = _log("flow.log")
        self._settle_log = _log("settlement.log")
        self._price_log = _log("prices.log")

        self.spent = set()
        for raw in self._spent_log:
            n = int.from_bytes(raw, "big")
            if n in self.spent:
                raise StateCorruptError("nonce recorded twice in spent log")
            self.spent.add(n)
        self.users = set(self._users_log)
        self.flow = [FlowEntry.from_bytes(b) for b in self._flow_log]
        self.settlement = [SettlementEntry.from_bytes(b) for b in self._settle_log]
        self.claimed = {e.ref for e in self.settlement if e.kind == SETTLE_CLAIM}
        self.feed: PriceFeedUpdate | None = None
        if len(self._price_log):
            self.feed = PriceFeedUpdate.from_bytes(self._price_log.entries[-1])
        stamps = [e.timestamp for e in self.flow] + [e.timestamp for e in self.settlement]
        self.clock = max(stamps, default=0)

    # -- construction -----------------------------------------------------

    @classmethod
    def setup(cls, assets, prices, *, seed=None, au: int = 0, floats=None, state_dir=None,
              fsync: bool = True, precompute: bool = True) -> Platform:
        """Create keys and publish epoch-0 prices for ``assets`` (names or a count)."""
        if isinstance(assets, int):
            assets = [f"A{i}" for i in range(assets)]
        assets = [str(a) for a in assets]
        prices = _price_list(prices, len(assets))
        rng = random.Random(seed) if seed is not None else random.SystemRandom()
        params = GroupParams.default()
        keys = PlatformKeys.generate(params, rng)
        pub = keys.public(params, assets)
        if precompute:
            pub.precompute()
        floats = {i: int(v) for i, v in (floats or {}).items()}
        if state_dir is not None:
            state_dir = Path(state_dir)
            state_dir.mkdir(parents=True, exist_ok=True)
            if (state_dir / "keys.bin").exists():
                raise FileExistsError(f"{state_dir} already holds a platform")
            (state_dir / "keys.bin").write_bytes(keys.secret_bytes())
            config = {"assets": assets, "au": au, "floats": {str(k): v for k, v in floats.items()}}
            (state_dir / "config.json").write_text(json.dumps(config, sort_keys=True))
        platform = cls(keys, pub, au=au, floats=floats, state_dir=state_dir, rng=rng, fsync=fsync)
        platform._publish(0, prices)
        return platform

    @classmethod
    def open(cls, state_dir, *, seed=None, fsync: bool = True, precompute: bool = True) -> Platform:
        """Restart from a state directory; corrupt files raise ``StateCorruptError``."""
        state_dir = Path(state_dir)
        try:
            config = json.loads((state_dir / "config.json").read_text())
            params = GroupParams.default()
            keys = PlatformKeys.from_secret_bytes(params, (state_dir / "keys.bin").read_bytes())
        except (OSError, ValueError, DecodeError) as exc:
            raise StateCorruptError(f"cannot load platform state: {exc}") from None
        pub = keys.public(params, config["assets"])
        if precompute:
            pub.precompute()
        rng = random.Random(seed) if seed is not None else random.SystemRandom()
        floats = {int(k): v for k, v in config.get("floats", {}).items()}
        p = cls(keys, pub, au=config["au"], floats=floats, state_dir=state_dir, rng=rng, fsync=fsync)
        if p.feed is None:
            raise StateCorruptError("no price epoch recorded")
        return p

    # -- prices -----------------------------------------------------------

    @property
    def epoch(self) -> int:
        return self.feed.epoch

    @property
    def prices(self) -> dict:
        return self.feed.prices

    def _publish(self, epoch: int, prices) -> PriceFeedUpdate:
        creds = []
        for i, pr in enumerate(prices):
            sig = ps_sign(self.keys.price, (epoch, i, pr), self.rng)
            creds.append(PriceCredential(epoch, i, pr, sig))
        feed = PriceFeedUpdate(epoch, tuple(creds))
        self._price_log.append(feed.to_bytes())
        self.feed = feed
        return feed

    def publish_prices(self, prices) -> PriceFeedUpdate:
        """Advance the epoch; every asset gets a fresh credential."""
        prices = _price_list(prices, self.pub.n_assets)
        with self._lock:
            return self._publish(self.epoch + 1, prices)

    # -- settlement ---------------------------------------------------------

    def advance_clock(self, seconds: int):
        if seconds < 0:
            raise ValueError("the clock only moves forward")
        self.clock += seconds

    def settle_incoming(self, name: int, amount: int, address: str = "") -> int:
        """Record an incoming transfer (written by the harness); returns its reference."""
        with self._lock:
            ref = len(self.settlement)
            e = SettlementEntry(SETTLE_IN, ref, name, amount, address, self.clock)
            self._settle_log.append(e.to_bytes())
            self.settlement.append(e)
            return ref

    def receipts(self, address: str) -> list:
        """Outgoing transfers to ``address`` (what a user reads back after withdrawing)."""
        return [e for e in self.settlement if e.kind == SETTLE_OUT and e.address == address]

    # -- handlers -------------------------------------------------------------

    def handle(self, req) -> BlindResponse:
        handler = {
            JoinRequest: self.handle_join,
            DepositRequest: self.handle_deposit,
            ExchangeRequest: self.handle_exchange,
            WithdrawRequest: self.handle_withdraw,
            FileRequest: self.handle_file,
        }.get(type(req))
        if handler is None:
            raise ProtocolError("malformed", "unknown request type")
        return handler(req)

    def handle_bytes(self, data: bytes) -> BlindResponse:
        try:
            req = decode_request(data)
        except DecodeError as exc:
            raise ProtocolError("malformed", f"malformed request: {exc}") from None
        return self.handle(req)

    def _observe(self, req, tx):
        if self.view_log is None:
            return req
        seen = {"tag"}
        self.view_log.append((TX_NAMES[tx], seen))
        return _Observed(req, seen)

    def _check_epoch(self, epoch):
        if epoch != self.epoch:
            raise ProtocolError("stale_epoch", f"stale epoch {epoch}, current is {self.epoch}")

    def _check_unspent(self, *nonces):
        if len(set(nonces)) != len(nonces) or any(n in self.spent for n in nonces):
            raise ProtocolError("double_spend", "double spend")

    def _verify(self, stmt, proof, tx, epoch, header=b""):
        if not verify(stmt, proof, context(self.pub, tx, epoch, header)):
            raise ProtocolError("invalid_proof", "invalid proof")

    def _commit(self, nonces=(), users=(), flow=(), settle=()):
        """The only state mutation point; the spent set is made durable first."""
        if nonces:
            self._spent_log.extend(n.to_bytes(32, "big") for n in nonces)
            self.spent.update(nonces)
        if users:
            self._users_log.extend(users)
            self.users.update(users)
        if settle:
            self._settle_log.extend(e.to_bytes() for e in settle)
            self.settlement.extend(settle)
            self.claimed.update(e.ref for e in settle if e.kind == SETTLE_CLAIM)
        if flow:
            self._flow_log.extend(e.to_bytes() for e in flow)
            self.flow.extend(flow)

    def _sign(self, keypair, *coms):
        return tuple(blind_sign(keypair, c, self.rng) for c in coms)

    def handle_join(self, req: JoinRequest) -> BlindResponse:
        req = self._observe(req, TX_JOIN)
        upk, com, epoch = req.upk, req.com, req.epoch
        key = upk.to_bytes()
        if key in self.users:
            raise ProtocolError("already_registered", "already registered")
        self._check_epoch(epoch)
        self._verify(join_statement(self.pub, upk, com), req.proof, TX_JOIN, epoch)
        with self._lock:
            if key in self.users:
                raise ProtocolError("already_registered", "already registered")
            self._check_epoch(epoch)
            sigs = self._sign(self.keys.reg, com)
            self._commit(users=[key])
        return BlindResponse(TX_JOIN, sigs)

    def _settlement_claim(self, ref, name, amount) -> SettlementEntry:
        if ref in self.claimed:
            raise ProtocolError("double_spend", "double spend: deposit already credited")
        if not 0 <= ref < len(self.settlement):
            raise ProtocolError("settlement_mismatch", "settlement mismatch: no such transfer")
        e = self.settlement[ref]
        if e.kind != SETTLE_IN or e.name != name or e.amount != amount:
            raise ProtocolError("settlement_mismatch", "settlement mismatch")
        return SettlementEntry(SETTLE_CLAIM, ref, name, amount, e.address, self.clock)

    def _check_asset(self, name):
        if not 0 <= name < self.pub.n_assets:
            raise ProtocolError("malformed", f"unknown asset {name}")

    def handle_deposit(self, req: DepositRequest) -> BlindResponse:
        req = self._observe(req, TX_DEPOSIT)
        epoch, name, amount, price, ref, coms = req.epoch, req.name, req.amount, req.price, req.ref, req.coms
        self._check_asset(name)
        if not 0 <= amount < AMOUNT_LIMIT:
            raise ProtocolError("out_of_range", "amount out of range")
        self._check_epoch(epoch)
        if price != self.prices[name]:
            raise ProtocolError("invalid_price", "price is not the current price")
        self._settlement_claim(ref, name, amount)
        stmt = deposit_statement(self.pub, name, amount, price, *coms)
        self._verify(stmt, req.proof, TX_DEPOSIT, epoch, deposit_header(ref))
        with self._lock:
            self._check_epoch(epoch)
            claim = self._settlement_claim(ref, name, amount)
            sigs = self._sign(self.keys.asset, coms[1])
            self._commit(settle=[claim], flow=[FlowEntry(self.clock, name, amount)])
        return BlindResponse(TX_DEPOSIT, sigs)

    def handle_exchange(self, req: ExchangeRequest) -> BlindResponse:
        req = self._observe(req, TX_EXCHANGE)
        epoch, rid, aid, coms = req.epoch, req.rid, req.aid, req.coms
        self._check_unspent(rid, aid)
        self._check_epoch(epoch)
        self._verify(exchange_statement(self.pub, epoch, rid, aid, coms), req.proof, TX_EXCHANGE, epoch)
        with self._lock:
            self._check_unspent(rid, aid)
            self._check_epoch(epoch)
            sigs = self._sign(self.keys.reg, coms[2]) + self._sign(self.keys.asset, coms[3], coms[4])
            self._commit(nonces=(rid, aid))
        return BlindResponse(TX_EXCHANGE, sigs)

    def handle_withdraw(self, req: WithdrawRequest) -> BlindResponse:
        req = self._observe(req, TX_WITHDRAW)
        epoch, rid, aid, name, amount, address, coms = (
            req.epoch, req.rid, req.aid, req.name, req.amount, req.address, req.coms)
        self._check_asset(name)
        if not 0 <= amount < AMOUNT_LIMIT:
            raise ProtocolError("out_of_range", "amount out of range")
        self._check_unspent(rid, aid)
        self._check_epoch(epoch)
        stmt = withdraw_statement(self.pub, epoch, rid, aid, name, amount, self.prices[name], coms)
        self._verify(stmt, req.proof, TX_WITHDRAW, epoch, withdraw_header(address))
        with self._lock:
            self._check_unspent(rid, aid)
            self._check_epoch(epoch)
            sigs = self._sign(self.keys.reg, coms[2]) + self._sign(self.keys.asset, coms[3])
            ref = len(self.settlement)
            out = SettlementEntry(SETTLE_OUT, ref, name, amount, address, self.clock)
            self._commit(nonces=(rid, aid), settle=[out], flow=[FlowEntry(self.clock, name, -amount)])
        return BlindResponse(TX_WITHDRAW, sigs)

    def handle_file(self, req: FileRequest) -> BlindResponse:
        req = self._observe(req, TX_FILE)
        epoch, upk, rid, au, coms = req.epoch, req.upk, req.rid, req.au, req.coms
        if upk.to_bytes() not in self.users:
            raise ProtocolError("unknown_user", "unknown user")
        self._check_unspent(rid)
        if au != self.au:
            raise ProtocolError("stale_au", f"audit period {au} is not the current period {self.au}")
        self._check_epoch(epoch)
        self._verify(file_statement(self.pub, epoch, upk, rid, au, coms), req.proof, TX_FILE, epoch)
        with self._lock:
            self._check_unspent(rid)
            self._check_epoch(epoch)
            sigs = self._sign(self.keys.reg, coms[1]) + self._sign(self.keys.comp, coms[2])
            self._commit(nonces=(rid,))
        return BlindResponse(TX_FILE, sigs)

    # -- audit ------------------------------------------------------------------

    def check(self, window: int = CHECK_WINDOW, now: int | None = None) -> LiquidityReport:
        return liquidity_check(self.flow, self.floats, self.pub.assets, self.clock if now is None else now, window)

    def snapshot(self) -> bytes:
        """Canonical encoding of all mutable state (for unchanged-state assertions)."""
        w = Writer().u64(self.epoch).u64(self.clock)
        for i, pr in sorted(self.prices.items()):
            w.u32(i).u64(pr)
        for u in sorted(self.users):
            w.raw(u)
        for n in sorted(self.spent):
            w.scalar(n)
        for e in self.flow:
            w.blob(e.to_bytes())
        for e in self.settlement:
            w.blob(e.to_bytes())
        return w.getvalue()


def _price_list(prices, n: int) -> list:
    if isinstance(prices, dict):
        missing = [i for i in range(n) if i not in prices]
        if missing or len(prices) != n:
            raise ValueError(f"prices must cover every asset; missing {missing}")
        prices = [prices[i] for i in range(n)]
    prices = [int(p) for p in prices]
    if len(prices) != n:
        raise ValueError(f"expected {n} prices, got {len(prices)}")
    for p in prices:
        if not 0 < p < AMOUNT_LIMIT:
            raise ValueError(f"price {p} outside (0, 2^32)")
    return prices
