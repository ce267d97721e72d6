import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pisces.group import G1, ORDER, DecodeError, GroupParams, msm
from pisces.ps import ps_keygen, ps_sign
from pisces.records import (AssetRecord, ComplianceDoc, PriceCredential, RegistrationRecord, compute_upk,
                            decode_record, record_fields, upk_scalar)

PARAMS = GroupParams.default()
RNG = random.Random(5)
KEYS = {n: ps_keygen(PARAMS, n, RNG) for n in (3, 4, 5)}


def _signed(cls, **values):
    sk = KEYS[len(cls.SLOTS)]
    rec = cls(**values, sig=None)
    return cls(**values, sig=ps_sign(sk, rec.messages(), RNG)), sk.pk


def _samples():
    upk = compute_upk(99)
    return [
        _signed(RegistrationRecord, usk=99, rid=12345, cp1=48000, cp2=60000),
        _signed(AssetRecord, usk=99, aid=7, name=1, amt=50, price=1600),
        _signed(PriceCredential, time=3, name=2, pr=120),
        _signed(ComplianceDoc, upk=upk, cp1=48000, cp2=60000, au=2026),
    ]


@pytest.mark.parametrize("rec,pub", _samples(), ids=lambda x: type(x).__name__)
def test_round_trip_and_verify(rec, pub):
    data = rec.to_bytes()
    back = decode_record(data)
    assert back == rec and type(back) is type(rec)
    assert back.verify(pub)
    assert record_fields(back) == record_fields(rec)


@pytest.mark.parametrize("rec,pub", _samples(), ids=lambda x: type(x).__name__)
def test_tampered_fields_fail(rec, pub):
    name = rec.SLOTS[-1]
    forged = type(rec)(**{**record_fields(rec), name: getattr(rec, name) + 1}, sig=rec.sig)
    assert not forged.verify(pub)


def test_decode_errors():
    rec = _samples()[0][0]
    data = rec.to_bytes()
    with pytest.raises(DecodeError):
        decode_record(b"")
    with pytest.raises(DecodeError):
        decode_record(b"\x09" + data[1:])
    with pytest.raises(DecodeError):
        decode_record(data[:1] + b"\x02" + data[2:])
    with pytest.raises(DecodeError):
        decode_record(data[:-1])
    with pytest.raises(DecodeError):
        decode_record(data + b"\x00")
    with pytest.raises(DecodeError):
        AssetRecord.from_bytes(data)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, ORDER - 1))
def test_upk_matches_msm(usk):
    assert compute_upk(usk) == msm([PARAMS.g], [usk])


def test_upk_zero_refused():
    with pytest.raises(ValueError):
        compute_upk(ORDER)


def test_upk_scalar_distinct():
    seen = {upk_scalar(compute_upk(u)) for u in range(1, 200)}
    assert len(seen) == 199


def test_nonce_aliases():
    reg, asset = _samples()[0][0], _samples()[1][0]
    assert reg.nonce == reg.rid and asset.nonce == asset.aid
    assert isinstance(compute_upk(3), G1)
