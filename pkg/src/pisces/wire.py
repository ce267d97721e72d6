"""Framing for daemon traffic.

Frame layout (big-endian)::

    b"PSCS" | version: u8 | type: u8 | length: u32 | payload | crc32: u32

The checksum covers the header and the payload.
"""

from __future__ import annotations

import struct
import zlib

from .encoding import Reader, Writer
from .group import DecodeError

MAGIC = b"PSCS"
VERSION = 1
MAX_PAYLOAD = 1 << 20
HEADER = struct.Struct(">4sBBI")

JOIN_REQ, JOIN_RESP = 0x01, 0x02
DEP_REQ, DEP_RESP = 0x03, 0x04
EX_REQ, EX_RESP = 0x05, 0x06
WD_REQ, WD_RESP = 0x07, 0x08
FILE_REQ, FILE_RESP = 0x09, 0x0A
PRICES_REQ, PRICES_RESP = 0x10, 0x11
PUBKEY_REQ, PUBKEY_RESP = 0x12, 0x13
TRANSFER_REQ, TRANSFER_RESP = 0x14, 0x15
RECEIPTS_REQ, RECEIPTS_RESP = 0x16, 0x17
ADMIN_PUBLISH, ADMIN_CLOCK, ADMIN_CHECK, ADMIN_RESP = 0x20, 0x21, 0x22, 0x23
ERR = 0x7F

# transaction tag -> (request type, response type)
TX_TYPES = {1: (JOIN_REQ, JOIN_RESP), 2: (DEP_REQ, DEP_RESP), 3: (EX_REQ, EX_RESP),
            4: (WD_REQ, WD_RESP), 5: (FILE_REQ, FILE_RESP)}
REQUEST_TX = {req: tx for tx, (req, _) in TX_TYPES.items()}


class FrameError(DecodeError):
    pass


def encode_frame(mtype: int, payload: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise ValueError("payload too large")
    head = HEADER.pack(MAGIC, VERSION, mtype, len(payload))
    return head + payload + struct.pack(">I", zlib.crc32(head + payload))


def _check_header(head: bytes) -> tuple:
    magic, version, mtype, length = HEADER.unpack(head)
    if magic != MAGIC:
        raise FrameError("bad magic")
    if version != VERSION:
        raise FrameError(f"unsupported wire version {version}")
    if length > MAX_PAYLOAD:
        raise FrameError("frame too large")
    return mtype, length


def decode_frame(data: bytes) -> tuple:
    """Parse one complete frame; returns ``(type, payload)``."""
    if len(data) < HEADER.size + 4:
        raise FrameError("truncated frame")
    mtype, length = _check_header(data[:HEADER.size])
    end = HEADER.size + length
    if len(data) != end + 4:
        raise FrameError("length does not match payload")
    (crc,) = struct.unpack(">I", data[end:])
    if crc != zlib.crc32(data[:end]):
        raise FrameError("checksum mismatch")
    return mtype, data[HEADER.size:end]


def _read_exact(sock, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if not buf:
                raise EOFError("connection closed")
            raise FrameError("connection closed mid-frame")
        buf.extend(chunk)
    return bytes(buf)


def read_frame(sock) -> tuple:
    head = _read_exact(sock, HEADER.size)
    _, length = _check_header(head)
    rest = _read_exact(sock, length + 4)
    return decode_frame(head + rest)


def send_frame(sock, mtype: int, payload: bytes = b""):
    sock.sendall(encode_frame(mtype, payload))


def error_payload(code: str, message: str) -> bytes:
    return Writer().text(code).text(message).getvalue()


def parse_error(payload: bytes) -> tuple:
    r = Reader(payload)
    code, message = r.text(), r.text()
    r.done()
    return code, message
