"""Platform daemon: a threaded TCP server speaking the framed wire protocol.

Every connection may carry any number of request frames; each is answered
by exactly one response frame (or an ``ERR`` frame holding an error code).
"""

from __future__ import annotations

import json
import logging
import socketserver
import threading
from pathlib import Path

from . import wire
from .encoding import Reader, Writer
from .group import DecodeError
from .platform import Platform, StateCorruptError
from .protocol import ProtocolError, decode_request

log = logging.getLogger(__name__)


def load_config(path) -> dict:
    """Platform config JSON: ``assets``, ``prices`` (one row per epoch), optional ``au``, ``floats``, ``seed``."""
    cfg = json.loads(Path(path).read_text())
    prices = cfg["prices"]
    if prices and not isinstance(prices[0], list):
        cfg["prices"] = [prices]
    return cfg


def open_or_setup(state_dir, config: dict | None = None, *, fsync: bool = True) -> Platform:
    """Reopen ``state_dir`` if it holds a platform, else set one up from ``config``."""
    state_dir = Path(state_dir)
    if (state_dir / "keys.bin").exists():
        return Platform.open(state_dir, fsync=fsync)
    if config is None:
        raise StateCorruptError(f"{state_dir} holds no platform and no config was given")
    assets = config["assets"]
    floats = {assets.index(k) if isinstance(k, str) and not k.isdigit() else int(k): v
              for k, v in config.get("floats", {}).items()}
    return Platform.setup(assets, config["prices"][0], seed=config.get("seed"), au=config.get("au", 0),
                          floats=floats, state_dir=state_dir, fsync=fsync)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server: PlatformServer = self.server
        while True:
            try:
                mtype, payload = wire.read_frame(self.request)
            except EOFError:
                return
            except (wire.FrameError, OSError) as exc:
                self._reply(wire.ERR, wire.error_payload("malformed", str(exc)))
                return
            rtype, body = server.dispatch(mtype, payload)
            if not self._reply(rtype, body):
                return

    def _reply(self, mtype, payload) -> bool:
        try:
            wire.send_frame(self.request, mtype, payload)
            return True
        except OSError:
            return False


class PlatformServer(socketserver.ThreadingTCPServer):
    """Serves one ``Platform``; admin frames are refused unless ``admin`` is set."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, platform: Platform, *, schedule=None, admin: bool = False):
        super().__init__(address, _Handler)
        self.platform = platform
        self.schedule = [list(r) for r in (schedule or [])]
        self.admin = admin
        self._ops = {
            wire.PUBKEY_REQ: (wire.PUBKEY_RESP, self._pubkey),
            wire.PRICES_REQ: (wire.PRICES_RESP, self._prices),
            wire.TRANSFER_REQ: (wire.TRANSFER_RESP, self._transfer),
            wire.RECEIPTS_REQ: (wire.RECEIPTS_RESP, self._receipts),
        }
        self._admin_ops = {
            wire.ADMIN_PUBLISH: self._publish,
            wire.ADMIN_CLOCK: self._clock,
            wire.ADMIN_CHECK: self._check,
        }

    @property
    def port(self) -> int:
        return self.server_address[1]

    def dispatch(self, mtype: int, payload: bytes) -> tuple:
        """Answer one frame; never raises for client-caused failures."""
        try:
            if mtype in wire.REQUEST_TX:
                req = decode_request(payload)
                if req.TX != wire.REQUEST_TX[mtype]:
                    raise ProtocolError("malformed", "frame type does not match request tag")
                resp = self.platform.handle(req)
                return wire.TX_TYPES[req.TX][1], resp.to_bytes()
            if mtype in self._ops:
                rtype, op = self._ops[mtype]
                return rtype, op(payload)
            if mtype in self._admin_ops:
                if not self.admin:
                    raise ProtocolError("forbidden", "admin commands are disabled")
                return wire.ADMIN_RESP, self._admin_ops[mtype](payload)
            raise ProtocolError("malformed", f"unknown message type {mtype:#x}")
        except ProtocolError as exc:
            return wire.ERR, wire.error_payload(exc.code, exc.message)
        except (DecodeError, ValueError) as exc:
            return wire.ERR, wire.error_payload("malformed", str(exc))
        except Exception:
            log.exception("request failed")
            return wire.ERR, wire.error_payload("internal", "internal error")

    # -- public queries ------------------------------------------------------

    def _pubkey(self, payload):
        Reader(payload).done()
        return self.platform.pub.to_bytes()

    def _prices(self, payload):
        Reader(payload).done()
        return self.platform.feed.to_bytes()

    def _transfer(self, payload):
        """Simulated on-chain transfer into the platform; answers the settlement reference."""
        r = Reader(payload)
        name, amount, address = r.u32(), r.u64(), r.text()
        r.done()
        if not 0 <= name < self.platform.pub.n_assets:
            raise ProtocolError("unknown_asset", f"unknown asset {name}")
        return Writer().u64(self.platform.settle_incoming(name, amount, address)).getvalue()

    def _receipts(self, payload):
        r = Reader(payload)
        address = r.text()
        r.done()
        entries = self.platform.receipts(address)
        w = Writer().u32(len(entries))
        for e in entries:
            w.blob(e.to_bytes())
        return w.getvalue()

    # -- admin ---------------------------------------------------------------

    def _publish(self, payload):
        r = Reader(payload)
        count = r.u32()
        prices = [r.u64() for _ in range(count)]
        r.done()
        if not prices:
            nxt = self.platform.epoch + 1
            if nxt >= len(self.schedule):
                raise ProtocolError("no_prices", f"no price row for epoch {nxt}")
            prices = self.schedule[nxt]
        feed = self.platform.publish_prices(prices)
        return f"epoch={feed.epoch}".encode()

    def _clock(self, payload):
        r = Reader(payload)
        seconds = r.u64()
        r.done()
        self.platform.advance_clock(seconds)
        return f"now={self.platform.clock}".encode()

    def _check(self, payload):
        r = Reader(payload)
        window = r.u64()
        r.done()
        report = self.platform.check(window)
        coins = " ".join(f"{c.name}={c.reserve}/{c.outflow}" for c in report.coins)
        return f"passed={str(report.passed).lower()} failing={','.join(report.failing)} {coins}".strip().encode()


def serve_in_thread(platform: Platform, host="127.0.0.1", port=0, **kw) -> tuple:
    """Start a server on a background thread; returns ``(server, thread)``."""
    server = PlatformServer((host, port), platform, **kw)
    t = threading.Thread(target=server.serve_forever, name="pisces-server", daemon=True)
    t.start()
    return server, t
