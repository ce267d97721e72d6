import socket
import struct
import zlib

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pisces import wire
from pisces.encoding import Reader, Writer
from pisces.group import G1, DecodeError


@given(st.integers(0, 255), st.binary(max_size=500))
def test_frame_round_trip(mtype, payload):
    frame = wire.encode_frame(mtype, payload)
    assert frame[:4] == b"PSCS"
    assert wire.decode_frame(frame) == (mtype, payload)


def test_length_and_checksum_checked():
    frame = bytearray(wire.encode_frame(wire.JOIN_REQ, b"hello"))
    with pytest.raises(wire.FrameError):
        wire.decode_frame(bytes(frame[:-1]))
    bad = bytearray(frame)
    bad[12] ^= 1
    with pytest.raises(wire.FrameError, match="checksum"):
        wire.decode_frame(bytes(bad))
    bad = bytearray(frame)
    bad[:4] = b"XXXX"
    with pytest.raises(wire.FrameError, match="magic"):
        wire.decode_frame(bytes(bad))
    head = wire.HEADER.pack(b"PSCS", 9, 1, 0)
    with pytest.raises(wire.FrameError, match="version"):
        wire.decode_frame(head + struct.pack(">I", zlib.crc32(head)))
    head = wire.HEADER.pack(b"PSCS", 1, 1, wire.MAX_PAYLOAD + 1)
    with pytest.raises(wire.FrameError, match="too large"):
        wire.decode_frame(head + b"\x00" * 4)
    with pytest.raises(ValueError):
        wire.encode_frame(1, b"\x00" * (wire.MAX_PAYLOAD + 1))


def test_socket_read_write():
    a, b = socket.socketpair()
    with a, b:
        wire.send_frame(a, wire.PRICES_REQ, b"")
        wire.send_frame(a, wire.ERR, wire.error_payload("double_spend", "double spend"))
        assert wire.read_frame(b) == (wire.PRICES_REQ, b"")
        mtype, payload = wire.read_frame(b)
        assert mtype == wire.ERR and wire.parse_error(payload) == ("double_spend", "double spend")
        a.sendall(wire.encode_frame(1, b"abc")[:7])
        a.close()
        with pytest.raises(wire.FrameError):
            wire.read_frame(b)


def test_closed_socket_is_eof():
    a, b = socket.socketpair()
    a.close()
    with b, pytest.raises(EOFError):
        wire.read_frame(b)


def test_tx_type_table():
    assert set(wire.TX_TYPES) == {1, 2, 3, 4, 5}
    for tx, (req, resp) in wire.TX_TYPES.items():
        assert wire.REQUEST_TX[req] == tx and resp == req + 1


@given(st.integers(0, 2**64 - 1), st.text(max_size=50), st.binary(max_size=50))
def test_encoding_round_trip(n, text, blob):
    g = G1.generator()
    data = Writer().u64(n).text(text).blob(blob).point(g).u8(7).u16(9).u32(11).getvalue()
    r = Reader(data)
    assert (r.u64(), r.text(), r.blob(), r.g1(), r.u8(), r.u16(), r.u32()) == (n, text, blob, g, 7, 9, 11)
    r.done()


def test_reader_errors():
    with pytest.raises(DecodeError):
        Reader(b"\x00").u32()
    with pytest.raises(DecodeError):
        Reader(b"\x00\x00").done()
