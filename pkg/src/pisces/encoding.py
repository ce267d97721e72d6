"""Byte-level readers and writers for the canonical encodings."""

from __future__ import annotations

import struct

from .group import G1, G2, SCALAR_SIZE, DecodeError, scalar_from_bytes, scalar_to_bytes


class Writer:
    def __init__(self):
        self.buf = bytearray()

    def u8(self, v: int) -> Writer:
        self.buf += struct.pack(">B", v)
        return self

    def u16(self, v: int) -> Writer:
        self.buf += struct.pack(">H", v)
        return self

    def u32(self, v: int) -> Writer:
        self.buf += struct.pack(">I", v)
        return self

    def u64(self, v: int) -> Writer:
        self.buf += struct.pack(">Q", v)
        return self

    def scalar(self, x: int) -> Writer:
        self.buf += scalar_to_bytes(x)
        return self

    def point(self, p) -> Writer:
        self.buf += p.to_bytes()
        return self

    def blob(self, data: bytes) -> Writer:
        self.u32(len(data))
        self.buf += data
        return self

    def text(self, s: str) -> Writer:
        return self.blob(s.encode())

    def raw(self, data: bytes) -> Writer:
        self.buf += data
        return self

    def getvalue(self) -> bytes:
        return bytes(self.buf)


class Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(bytes(data))
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise DecodeError("truncated input")
        out = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def scalar(self) -> int:
        return scalar_from_bytes(self.take(SCALAR_SIZE))

    def g1(self) -> G1:
        return G1.from_bytes(self.take(G1.SIZE))

    def g2(self) -> G2:
        return G2.from_bytes(self.take(G2.SIZE))

    def blob(self) -> bytes:
        return self.take(self.u32())

    def text(self) -> str:
        try:
            return self.blob().decode()
        except UnicodeDecodeError:
            raise DecodeError("invalid utf-8") from None

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos

    def done(self):
        if self.remaining:
            raise DecodeError(f"{self.remaining} trailing bytes")
