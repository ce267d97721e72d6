"""``pisces`` command line: daemon, wallet commands, scenarios and benchmarks.

Every command prints logfmt records (``ok cmd=... key=value``) on stdout.
Failures print ``error cmd=... code=... message="..."`` and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import signal
import sys
import threading
from pathlib import Path

from .client import Client, load_wallet, save_wallet, sync_prices
from .platform import CHECK_WINDOW, authority_verify
from .protocol import ProtocolError
from .user import InexactExchange, UserWallet

DEFAULT_PORT = 7040
EXIT_ERROR = 1
EXIT_USAGE = 2


def logfmt(status: str, **fields) -> str:
    parts = [status]
    for k, v in fields.items():
        if isinstance(v, bool):
            v = str(v).lower()
        v = str(v)
        if v == "" or any(c in v for c in ' "=\\'):
            v = json.dumps(v)
        parts.append(f"{k}={v}")
    return " ".join(parts)


def emit(status: str, **fields):
    print(logfmt(status, **fields), flush=True)


# -- wallet commands -----------------------------------------------------------


def _client(args) -> Client:
    return Client(args.host, args.port, timeout=args.timeout)


def _rng(args):
    return random.Random(args.seed) if args.seed is not None else None


def _asset(wallet: UserWallet, name: str) -> int:
    try:
        return wallet.pub.asset_index(int(name) if name.isdigit() else name)
    except KeyError:
        raise ProtocolError("unknown_asset", f"unknown asset {name!r}") from None


def _submit(client: Client, wallet: UserWallet, built):
    req, pending = built
    try:
        resp = client.submit(req)
    except ProtocolError:
        wallet.abort(pending)
        raise
    return pending, wallet.finalize(pending, resp)


def cmd_join(args):
    with _client(args) as c:
        path = Path(args.wallet)
        if path.exists():
            w = load_wallet(path, _rng(args))
        else:
            w = UserWallet(c.pubkey(), rng=_rng(args))
        sync_prices(c, w)
        _submit(c, w, w.build_join())
    save_wallet(path, w)
    return {"wallet": str(path)}


def cmd_deposit(args):
    w = load_wallet(args.wallet, _rng(args))
    name = _asset(w, args.asset)
    w._require_registration()
    with _client(args) as c:
        sync_prices(c, w)
        ref = c.transfer(name, args.amount, args.source)
        _submit(c, w, w.build_deposit(name, args.amount, ref))
    save_wallet(args.wallet, w)
    return {"asset": w.pub.assets[name], "amount": args.amount, "ref": ref, "balance": w.balance(name)}


def cmd_exchange(args):
    w = load_wallet(args.wallet, _rng(args))
    src, dst = _asset(w, args.src), _asset(w, args.dst)
    w._require_registration()
    with _client(args) as c:
        sync_prices(c, w)
        pending, _ = _submit(c, w, w.build_exchange(w.pick_asset(src, args.amount), dst, args.amount))
    save_wallet(args.wallet, w)
    info = pending.info
    return {"from": w.pub.assets[src], "amount": args.amount, "to": w.pub.assets[dst],
            "received": info["received"], "sell_price": info["sell_price"], "target_price": info["target_price"]}


def cmd_withdraw(args):
    w = load_wallet(args.wallet, _rng(args))
    name = _asset(w, args.asset)
    w._require_registration()
    with _client(args) as c:
        sync_prices(c, w)
        _submit(c, w, w.build_withdraw(w.pick_asset(name, args.amount), args.amount, args.address))
        save_wallet(args.wallet, w)
        receipts = c.receipts(args.address)
    received = bool(receipts) and receipts[-1].name == name and receipts[-1].amount == args.amount
    return {"asset": w.pub.assets[name], "amount": args.amount, "address": args.address, "receipt": received}


def cmd_file(args):
    w = load_wallet(args.wallet, _rng(args))
    w._require_registration()
    with _client(args) as c:
        sync_prices(c, w)
        _, recs = _submit(c, w, w.build_file(args.au))
    save_wallet(args.wallet, w)
    doc = recs[1]
    return {"au": doc.au, "cp1": doc.cp1, "cp2": doc.cp2, "verified": authority_verify(w.pub, doc, args.au)}


def cmd_prices(args):
    with _client(args) as c:
        pub, feed = c.pubkey(), c.feed()
    for cred in feed.credentials:
        emit("price", epoch=feed.epoch, asset=pub.assets[cred.name], index=cred.name, price=cred.pr)
    return {"epoch": feed.epoch, "assets": pub.n_assets}


def cmd_balance(args):
    w = load_wallet(args.wallet)
    for a in sorted(w.assets.values(), key=lambda a: (a.name, a.aid)):
        emit("record", asset=w.pub.assets[a.name], amount=a.amt, price=a.price)
    cp1, cp2 = w.cp if w.registration else (0, 0)
    return {"registered": w.registration is not None, "cp1": cp1, "cp2": cp2, "epoch": w.epoch}


# -- admin ----------------------------------------------------------------------


def cmd_admin(args):
    with _client(args) as c:
        if args.admin_cmd == "publish":
            text = c.admin_publish(args.prices)
        elif args.admin_cmd == "clock":
            text = c.admin_clock(args.seconds)
        else:
            text = c.admin_check(args.window)
    return dict(kv.split("=", 1) for kv in text.split())


# -- daemon ---------------------------------------------------------------------


def cmd_serve(args):
    from .server import PlatformServer, load_config, open_or_setup

    if not args.state:
        raise ProtocolError("usage", "no state directory (use --state or PISCES_STATE)")
    config = load_config(args.config) if args.config else None
    if config is not None and args.seed is not None:
        config["seed"] = args.seed
    platform = open_or_setup(args.state, config, fsync=not args.no_fsync)
    schedule = config["prices"] if config else []
    try:
        server = PlatformServer((args.host, args.port), platform, schedule=schedule, admin=args.admin)
    except OSError as exc:
        raise ProtocolError("bind_failed", f"cannot listen on {args.host}:{args.port}: {exc}") from None

    def stop(*_):
        threading.Thread(target=server.shutdown, daemon=True).start()

    signal.signal(signal.SIGTERM, stop)
    signal.signal(signal.SIGINT, stop)
    emit("ok", cmd="serve", event="listening", host=args.host, port=server.port,
         epoch=platform.epoch, assets=platform.pub.n_assets)
    try:
        server.serve_forever()
    finally:
        server.server_close()
    return {"event": "stopped"}


# -- scenarios and bench ----------------------------------------------------------------


def cmd_scenario(args):
    from .oracle import ShadowExchange, diff_docs, diff_outcomes, oracle_overdraft
    from .scenario import load_scenario, run_scenario

    scen = load_scenario(args.file)
    result = run_scenario(scen, state_dir=args.state_dir, wallet_dir=args.wallet_dir)
    for o in result.outcomes:
        fields = dict(o)
        emit(fields.pop("status"), cmd="step", **fields)
    failed = len(result.unexpected)
    summary = {"steps": len(result.outcomes), "unexpected": failed}
    if args.oracle:
        prices = scen["prices"] if isinstance(scen["prices"][0], list) else [scen["prices"]]
        shadow = ShadowExchange(scen["assets"], prices[0], scen.get("au", 0))
        actions = _resolve_publishes(scen["actions"], prices)
        expected = [shadow.apply(a) for a in actions]
        diffs = diff_outcomes(result.outcomes, expected) + diff_docs(result.docs, shadow.docs)
        for d in diffs:
            emit("diff", **d)
        violation = oracle_overdraft(result.events)
        if violation is not None:
            emit("violation", index=violation.index, kind=violation.kind, detail=violation.detail)
        summary.update(diffs=len(diffs), overdraft="none" if violation is None else violation.kind)
        failed += len(diffs) + (violation is not None)
    if failed:
        raise ProtocolError("scenario_failed", f"{failed} scenario check(s) failed")
    return summary


def _resolve_publishes(actions, prices) -> list:
    """Give schedule-driven publish actions their explicit price row for the shadow."""
    out, epoch = [], 0
    for a in actions:
        if a["op"] == "publish":
            if "prices" not in a:
                if epoch + 1 >= len(prices):
                    out.append(a)
                    continue
                a = {**a, "prices": prices[epoch + 1]}
            epoch += 1
        out.append(a)
    return out


def cmd_bench(args):
    from .bench import format_results, run_bench

    results = run_bench(args.n, args.iterations, args.seed or 0)
    for line in format_results(results):
        print(line, flush=True)
    return {"iterations": args.iterations, "n": ",".join(str(n) for n in args.n)}


# -- parser -----------------------------------------------------------------------


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def build_parser() -> argparse.ArgumentParser:
    env = os.environ
    p = argparse.ArgumentParser(prog="pisces", description="Private and compliable crypto exchange.")
    p.add_argument("--host", default=env.get("PISCES_HOST", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(env.get("PISCES_PORT", DEFAULT_PORT)))
    p.add_argument("--wallet", default=env.get("PISCES_WALLET", "pisces-wallet.json"), help="wallet file")
    p.add_argument("--seed", type=int, default=None, help="deterministic randomness (testing only)")
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("serve", help="run the platform daemon")
    s.add_argument("--state", default=env.get("PISCES_STATE"), help="state directory (env PISCES_STATE)")
    s.add_argument("--config", help="platform config JSON (assets, price schedule); needed on first start")
    s.add_argument("--admin", action="store_true", help="accept admin commands")
    s.add_argument("--no-fsync", action="store_true", help="skip fsync on log appends (tests only)")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("join", help="register a new user")
    s.set_defaults(func=cmd_join)
    s = sub.add_parser("deposit", help="transfer funds in and credit them")
    s.add_argument("asset")
    s.add_argument("amount", type=_nonneg)
    s.add_argument("--source", default="cli", help="sending address of the incoming transfer")
    s.set_defaults(func=cmd_deposit)
    s = sub.add_parser("exchange", help="exchange AMOUNT of FROM into TO at current prices")
    s.add_argument("src", metavar="from")
    s.add_argument("amount", type=_nonneg)
    s.add_argument("dst", metavar="to")
    s.set_defaults(func=cmd_exchange)
    s = sub.add_parser("withdraw", help="withdraw to an external address")
    s.add_argument("asset")
    s.add_argument("amount", type=_nonneg)
    s.add_argument("address")
    s.set_defaults(func=cmd_withdraw)
    s = sub.add_parser("file", help="obtain a signed compliance document for audit period AU")
    s.add_argument("au", type=_nonneg)
    s.set_defaults(func=cmd_file)
    s = sub.add_parser("prices", help="show the current price feed")
    s.set_defaults(func=cmd_prices)
    s = sub.add_parser("balance", help="show wallet records (offline)")
    s.set_defaults(func=cmd_balance)

    s = sub.add_parser("admin", help="platform operator commands")
    a = s.add_subparsers(dest="admin_cmd", required=True)
    x = a.add_parser("publish", help="publish prices (next schedule row when none given)")
    x.add_argument("prices", nargs="*", type=_nonneg)
    x = a.add_parser("clock", help="advance the simulated clock")
    x.add_argument("seconds", type=_nonneg)
    x = a.add_parser("check", help="liquidity self-check")
    x.add_argument("--window", type=_nonneg, default=CHECK_WINDOW, help="trailing window in seconds")
    s.set_defaults(func=cmd_admin)

    s = sub.add_parser("scenario", help="deterministic scenario scripts")
    a = s.add_subparsers(dest="scenario_cmd", required=True)
    x = a.add_parser("run", help="run a scenario JSON against an in-process platform")
    x.add_argument("file")
    x.add_argument("--state-dir", help="persist platform state here")
    x.add_argument("--wallet-dir", help="write final wallet files here")
    x.add_argument("--oracle", action="store_true", help="compare against the plaintext oracles")
    s.set_defaults(func=cmd_scenario)

    s = sub.add_parser("bench", help="time every transaction and report transcript sizes")
    s.add_argument("--n", type=int, nargs="+", default=[4, 64, 256], help="asset counts")
    s.add_argument("--iterations", type=int, default=100)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    cmd = args.cmd if args.cmd != "admin" else f"admin-{args.admin_cmd}"
    try:
        fields = args.func(args)
    except InexactExchange as exc:
        emit("error", cmd=cmd, code=exc.code, message=exc.message, suggested=exc.suggested)
        return EXIT_ERROR
    except ProtocolError as exc:
        emit("error", cmd=cmd, code=exc.code, message=exc.message)
        return EXIT_USAGE if exc.code == "usage" else EXIT_ERROR
    except (OSError, ValueError) as exc:
        emit("error", cmd=cmd, code="failed", message=str(exc))
        return EXIT_ERROR
    emit("ok", cmd=cmd, **fields)
    return 0


if __name__ == "__main__":
    sys.exit(main())
