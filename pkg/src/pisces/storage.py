"""Append-only state files.

Each entry is one line: the hex-encoded payload, a space, and the CRC-32 of
the payload as 8 hex digits.  A torn final line (crash mid-write) is
dropped on load; any other damage makes the file unreadable.
"""

from __future__ import annotations

import os
import zlib
from pathlib import Path


class StateCorruptError(RuntimeError):
    pass


def frame(payload: bytes) -> bytes:
    return payload.hex().encode() + b" " + f"{zlib.crc32(payload):08x}".encode() + b"\n"


def unframe(line: bytes) -> bytes:
    try:
        body, crc = line.rstrip(b"\n").split(b" ")
        payload = bytes.fromhex(body.decode())
        ok = int(crc, 16) == zlib.crc32(payload)
    except ValueError:
        ok = False
    if not ok:
        raise StateCorruptError("checksum mismatch")
    return payload


class AppendLog:
    """Durable append-only list of byte records (``path=None`` keeps it in memory)."""

    def __init__(self, path: str | os.PathLike | None, fsync: bool = True):
        self.path = Path(path) if path is not None else None
        self.fsync = fsync
        self.entries: list[bytes] = []
        if self.path is not None and self.path.exists():
            self.entries = self._load()

    def _load(self) -> list[bytes]:
        raw = self.path.read_bytes()
        lines = raw.split(b"\n")
        tail = lines.pop()  # empty when the file ends with a newline
        out = []
        for n, line in enumerate(lines):
            try:
                out.append(unframe(line))
            except StateCorruptError:
                raise StateCorruptError(f"{self.path}: corrupt entry at line {n + 1}") from None
        if tail:
            # torn write: keep the good prefix and truncate the partial line
            with open(self.path, "r+b") as fh:
                fh.truncate(len(raw) - len(tail))
        return out

    def append(self, payload: bytes):
        self.extend([payload])

    def extend(self, payloads):
        payloads = list(payloads)
        if self.path is not None and payloads:
            with open(self.path, "ab") as fh:
                fh.write(b"".join(frame(p) for p in payloads))
                fh.flush()
                if self.fsync:
                    os.fsync(fh.fileno())
        self.entries.extend(payloads)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)
