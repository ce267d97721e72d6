import random
import socket

import pytest

from pisces import wire
from pisces.client import Client, load_wallet, save_wallet, sync_prices
from pisces.platform import Platform
from pisces.protocol import ProtocolError
from pisces.server import open_or_setup, serve_in_thread
from pisces.user import UserWallet

from conftest import ASSETS, PRICES, fresh


@pytest.fixture
def server(base_platform):
    srv, thread = serve_in_thread(fresh(base_platform), schedule=[PRICES, [1, 2000, 120, 7]], admin=True)
    yield srv
    srv.shutdown()
    srv.server_close()
    thread.join()


def _submit(client, w, built):
    req, pending = built
    return req, w.finalize(pending, client.submit(req))


def _joined(client, seed=1):
    w = UserWallet(client.pubkey(), rng=random.Random(seed))
    sync_prices(client, w)
    _submit(client, w, w.build_join())
    return w


def test_alice_over_the_wire(server):
    with Client(port=server.port) as c:
        w = _joined(c)
        ref = c.transfer(0, 100000, "bank:alice")
        _submit(c, w, w.build_deposit(0, 100000, ref))
        _submit(c, w, w.build_exchange(w.pick_asset(0, 80000), 1, 80000))
        assert c.admin_publish() == "epoch=1"
        sync_prices(c, w)
        _submit(c, w, w.build_withdraw(w.pick_asset(1, 30), 30, "btc:alice"))
        assert [(e.name, e.amount) for e in c.receipts("btc:alice")] == [(1, 30)]
        _, recs = _submit(c, w, w.build_file(2026))
        assert (recs[1].cp1, recs[1].cp2) == (48000, 60000)
        # BTC only ever arrived through an exchange, so the payout is uncovered
        assert c.admin_check(30 * 86400).startswith("passed=false failing=BTC USD=100000/0 BTC=-30/30")
        assert c.admin_clock(5) == "now=5"
        with pytest.raises(ProtocolError) as info:
            c.admin_publish()
        assert info.value.code == "no_prices"


def test_raw_socket_replay(server):
    with Client(port=server.port) as c:
        w = _joined(c)
        ref = c.transfer(1, 10, "x")
        _submit(c, w, w.build_deposit(1, 10, ref))
        req, _ = _submit(c, w, w.build_withdraw(w.pick_asset(1, 1), 1, "btc:w"))
    data = req.to_bytes()
    with socket.create_connection(("127.0.0.1", server.port)) as s:
        wire.send_frame(s, wire.WD_REQ, data)
        mtype, body = wire.read_frame(s)
    assert mtype == wire.ERR and wire.parse_error(body)[0] == "double_spend"
    with Client(port=server.port) as c, pytest.raises(ProtocolError) as info:
        c.submit_raw(data)
    assert info.value.code == "double_spend"


def test_bad_frames(server):
    with socket.create_connection(("127.0.0.1", server.port)) as s:
        wire.send_frame(s, 0x7E, b"")
        mtype, body = wire.read_frame(s)
        assert wire.parse_error(body)[0] == "malformed"
        wire.send_frame(s, wire.EX_REQ, b"\x03garbage")
        assert wire.parse_error(wire.read_frame(s)[1])[0] == "malformed"
        s.sendall(b"NOPE" + b"\x00" * 12)
        assert wire.parse_error(wire.read_frame(s)[1])[0] == "malformed"
    with Client(port=server.port) as c:
        with pytest.raises(ProtocolError) as info:
            c.transfer(99, 1, "x")
        assert info.value.code == "unknown_asset"
        assert c.feed().epoch == 0  # server still healthy


def test_frame_type_must_match_request(server):
    with Client(port=server.port) as c:
        w = UserWallet(c.pubkey(), rng=random.Random(3))
        sync_prices(c, w)
        req, _ = w.build_join()
        with pytest.raises(ProtocolError) as info:
            c.call(wire.FILE_REQ, req.to_bytes())
        assert info.value.code == "malformed"


def test_admin_forbidden(base_platform):
    srv, thread = serve_in_thread(fresh(base_platform))
    try:
        with Client(port=srv.port) as c, pytest.raises(ProtocolError) as info:
            c.admin_clock(1)
        assert info.value.code == "forbidden"
    finally:
        srv.shutdown()
        srv.server_close()


def test_connection_failed():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    with pytest.raises(ProtocolError) as info:
        Client(port=port, timeout=2).feed()
    assert info.value.code == "connection_failed"


def test_restart_mid_scenario_keeps_spent_nonces(tmp_path):
    state = tmp_path / "state"
    config = {"assets": ASSETS, "prices": [PRICES], "au": 2026, "seed": 9}
    srv, thread = serve_in_thread(open_or_setup(state, config, fsync=True))
    with Client(port=srv.port) as c:
        w = _joined(c)
        ref = c.transfer(0, 5000, "bank")
        _submit(c, w, w.build_deposit(0, 5000, ref))
        req, _ = _submit(c, w, w.build_exchange(w.pick_asset(0, 1600), 1, 1600))
    srv.shutdown()
    srv.server_close()
    thread.join()

    srv, thread = serve_in_thread(open_or_setup(state, None))
    try:
        with Client(port=srv.port) as c:
            with pytest.raises(ProtocolError) as info:
                c.submit(req)
            assert info.value.code == "double_spend"
            with pytest.raises(ProtocolError) as info:
                c.submit(w.build_deposit(0, 5000, ref)[0])
            assert info.value.code == "double_spend"
            _submit(c, w, w.build_exchange(w.pick_asset(1, 1), 0, 1))
            assert w.balance(0) == 5000
    finally:
        srv.shutdown()
        srv.server_close()


def test_open_without_config(tmp_path):
    with pytest.raises(Exception, match="no config"):
        open_or_setup(tmp_path / "empty", None)
    assert isinstance(open_or_setup(tmp_path / "p", {"assets": ["A"], "prices": [[1]]}, fsync=False), Platform)


def test_wallet_file(tmp_path, platform):
    w = UserWallet(platform.pub, rng=random.Random(1))
    path = tmp_path / "w.json"
    save_wallet(path, w)
    back = load_wallet(path)
    assert back.usk == w.usk and back.pub.to_bytes() == w.pub.to_bytes()
    with pytest.raises(ProtocolError) as info:
        load_wallet(tmp_path / "missing.json")
    assert info.value.code == "no_wallet"
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(ProtocolError):
        load_wallet(tmp_path / "bad.json")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["bad.json", "w.json"]  # no temp files left
