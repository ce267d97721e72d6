import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pisces.protocol import ProtocolError
from pisces.user import InexactExchange, UserWallet
from pisces.zk import WitnessError


def test_alice_records(funded):
    r = funded
    r.step({"op": "exchange", "user": "alice", "from": "USD", "amount": 80000, "to": "BTC"})
    w = r.wallets["alice"]
    lots = sorted((a.name, a.amt, a.price) for a in w.assets.values())
    assert lots == [(0, 20000, 1), (1, 50, 1600), (1, 50, 1600)]
    assert w.cp == (0, 0)  # the numeraire is exempt
    assert w.balance(1) == 100


def test_crypto_spend_accrues(funded):
    r = funded
    out = r.step({"op": "exchange", "user": "alice", "from": "BTC", "amount": 3, "to": "ETH"})
    w = r.wallets["alice"]
    assert out["received"] == 40 and w.balance(2) == 40
    assert w.cp == (4800, 4800)


@pytest.mark.parametrize("k,pi,pj,out", [(80000, 1, 1600, 50), (3, 1600, 120, 40), (1, 5, 5, 1)])
def test_exchange_amount(k, pi, pj, out):
    assert UserWallet.exchange_amount(k, pi, pj) == out


@given(st.integers(1, 10**6), st.integers(1, 10**4), st.integers(1, 10**4))
def test_inexact_suggestion_is_exact(k, pi, pj):
    try:
        got = UserWallet.exchange_amount(k, pi, pj)
        assert got * pj == k * pi
    except InexactExchange as exc:
        assert exc.suggested < k and (exc.suggested * pi) % pj == 0


def test_refusals(funded):
    w = funded.wallets["alice"]
    usd = w.pick_asset(0, 1)
    with pytest.raises(ProtocolError, match="insufficient"):
        w.build_exchange(usd, 1, usd.amt + 1)
    with pytest.raises(ProtocolError, match="insufficient"):
        w.pick_asset(0, 10**9)
    with pytest.raises(InexactExchange) as info:
        w.build_exchange(usd, 1, 1601)
    assert info.value.code == "inexact_exchange" and info.value.suggested == 1600
    with pytest.raises(ProtocolError) as info:
        w.build_exchange(usd, 3, 2**32)
    assert info.value.code == "out_of_range"
    with pytest.raises(ProtocolError) as info:
        w.build_withdraw(usd, usd.amt + 1, "x")
    assert info.value.code == "insufficient_balance"
    assert not w.locked


def test_overdraft_witness_refused_by_prover(funded):
    w = funded.wallets["alice"]
    btc = w.pick_asset(1, 1)
    with pytest.raises(WitnessError):
        w._build_exchange(w.registration, btc, 1, btc.amt + 1, btc.amt + 1, w.price(1), w.price(1))


def test_not_registered(platform):
    w = UserWallet(platform.pub, rng=random.Random(1))
    with pytest.raises(ProtocolError) as info:
        w.build_file(2026)
    assert info.value.code == "not_registered"


def test_record_busy_and_abort(funded):
    w = funded.wallets["alice"]
    btc = w.pick_asset(1, 1)
    _, pending = w.build_withdraw(btc, 1, "a")
    with pytest.raises(ProtocolError) as info:
        w.build_withdraw(btc, 1, "b")
    assert info.value.code == "record_busy"
    w.abort(pending)
    assert not w.locked
    w.build_withdraw(btc, 1, "b")


def test_nonces_unique(platform):
    w = UserWallet(platform.pub, rng=random.Random(2))
    nonces = [w._fresh_nonce() for _ in range(10_000)]
    assert len(set(nonces)) == 10_000 and 0 not in nonces


def test_wallet_json_round_trip(funded):
    w = funded.wallets["alice"]
    text = w.to_json()
    back = UserWallet.from_json(w.pub, text)
    assert back.to_json() == text
    assert back.registration == w.registration and back.assets == w.assets


def test_response_mismatch_leaves_wallet(funded):
    w = funded.wallets["alice"]
    btc = w.pick_asset(1, 1)
    req, pending = w.build_withdraw(btc, 1, "a")
    resp = funded.platform.handle(req)
    before = w.to_json()
    bad = type(resp)(resp.tx, resp.sigs[:1])
    with pytest.raises(ProtocolError) as info:
        w.finalize(pending, bad)
    assert info.value.code == "desync"
    assert w.to_json() == before and not w.locked


def test_price_feed_checked(funded):
    w = funded.wallets["alice"]
    feed = funded.platform.feed
    with pytest.raises(ProtocolError) as info:
        w.update_prices(feed.epoch + 1, feed.credentials)
    assert info.value.code == "invalid_price"
    forged = [type(c)(c.time, c.name, c.pr + 1, c.sig) for c in feed.credentials]
    with pytest.raises(ProtocolError, match="signature"):
        w.update_prices(feed.epoch, forged)
    assert w.epoch == feed.epoch and w.price(1).pr == 1600
