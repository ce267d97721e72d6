"""Client side of the daemon protocol plus wallet-file handling."""

from __future__ import annotations

import json
import os
import socket
import tempfile
from pathlib import Path

from . import wire
from .encoding import Reader, Writer
from .platform import PriceFeedUpdate, SettlementEntry
from .protocol import REQUEST_TYPES, BlindResponse, PlatformPublicKey, ProtocolError
from .user import UserWallet

WALLET_FILE_FORMAT = "pisces-wallet-file/1"


class Client:
    """One connection to the daemon; failures surface as ``ProtocolError`` codes."""

    def __init__(self, host: str = "127.0.0.1", port: int = 7040, timeout: float = 60.0):
        self.address = (host, port)
        self.timeout = timeout
        self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def _connect(self):
        if self._sock is None:
            try:
                self._sock = socket.create_connection(self.address, timeout=self.timeout)
            except OSError as exc:
                raise ProtocolError("connection_failed", f"connection failed: {exc}") from None
        return self._sock

    def call(self, mtype: int, payload: bytes = b"", expect: int | None = None) -> bytes:
        sock = self._connect()
        try:
            wire.send_frame(sock, mtype, payload)
            rtype, body = wire.read_frame(sock)
        except (OSError, EOFError, wire.FrameError) as exc:
            self.close()
            raise ProtocolError("connection_failed", f"connection failed: {exc}") from None
        if rtype == wire.ERR:
            raise ProtocolError(*wire.parse_error(body))
        if expect is not None and rtype != expect:
            raise ProtocolError("malformed", f"unexpected response type {rtype:#x}")
        return body

    # -- queries ---------------------------------------------------------------

    def pubkey(self) -> PlatformPublicKey:
        return PlatformPublicKey.from_bytes(self.call(wire.PUBKEY_REQ, expect=wire.PUBKEY_RESP))

    def feed(self) -> PriceFeedUpdate:
        return PriceFeedUpdate.from_bytes(self.call(wire.PRICES_REQ, expect=wire.PRICES_RESP))

    def transfer(self, name: int, amount: int, address: str) -> int:
        body = self.call(wire.TRANSFER_REQ, Writer().u32(name).u64(amount).text(address).getvalue(),
                         wire.TRANSFER_RESP)
        r = Reader(body)
        ref = r.u64()
        r.done()
        return ref

    def receipts(self, address: str) -> list:
        r = Reader(self.call(wire.RECEIPTS_REQ, Writer().text(address).getvalue(), wire.RECEIPTS_RESP))
        out = [SettlementEntry.from_bytes(r.blob()) for _ in range(r.u32())]
        r.done()
        return out

    def submit(self, req) -> BlindResponse:
        req_type, resp_type = wire.TX_TYPES[req.TX]
        return BlindResponse.from_bytes(self.call(req_type, req.to_bytes(), resp_type))

    def submit_raw(self, data: bytes) -> bytes:
        """Send already-encoded request bytes (replay tests)."""
        tx = data[0] if data else 0
        if tx not in REQUEST_TYPES:
            raise ProtocolError("malformed", "not a request")
        return self.call(wire.TX_TYPES[tx][0], data)

    # -- admin -------------------------------------------------------------------

    def admin_publish(self, prices=()) -> str:
        w = Writer().u32(len(prices))
        for p in prices:
            w.u64(p)
        return self.call(wire.ADMIN_PUBLISH, w.getvalue(), wire.ADMIN_RESP).decode()

    def admin_clock(self, seconds: int) -> str:
        return self.call(wire.ADMIN_CLOCK, Writer().u64(seconds).getvalue(), wire.ADMIN_RESP).decode()

    def admin_check(self, window: int) -> str:
        return self.call(wire.ADMIN_CHECK, Writer().u64(window).getvalue(), wire.ADMIN_RESP).decode()


# -- wallet files -----------------------------------------------------------------


def atomic_write(path, text: str):
    """Write via a temporary file in the same directory, fsync, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def save_wallet(path, wallet: UserWallet):
    """Store the wallet together with the platform key it belongs to."""
    doc = {"format": WALLET_FILE_FORMAT, "pub": wallet.pub.to_bytes().hex(),
           "wallet": json.loads(wallet.to_json())}
    atomic_write(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_wallet(path, rng=None) -> UserWallet:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ProtocolError("no_wallet", f"no wallet file at {path}; run join first") from None
    if doc.get("format") != WALLET_FILE_FORMAT:
        raise ProtocolError("malformed", f"{path} is not a wallet file")
    pub = PlatformPublicKey.from_bytes(bytes.fromhex(doc["pub"]))
    return UserWallet.from_json(pub, json.dumps(doc["wallet"]), rng)


def sync_prices(client: Client, wallet: UserWallet):
    """Fetch the current feed when the wallet's epoch is behind."""
    feed = client.feed()
    if feed.epoch != wallet.epoch or not wallet.prices:
        wallet.update_prices(feed.epoch, feed.credentials)
    return feed
