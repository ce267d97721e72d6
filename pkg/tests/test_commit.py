import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pisces.commit import CommitmentKey, pedersen_commit
from pisces.group import ORDER, msm

scalars = st.integers(min_value=0, max_value=ORDER - 1)
vectors = st.lists(scalars, min_size=1, max_size=6)


@settings(max_examples=40, deadline=None)
@given(vectors, vectors, scalars, scalars)
def test_homomorphism(m1, m2, r1, r2):
    n = max(len(m1), len(m2))
    m1, m2 = m1 + [0] * (n - len(m1)), m2 + [0] * (n - len(m2))
    key = CommitmentKey.pedersen(slots=n)
    total = pedersen_commit(m1, r1, key) + pedersen_commit(m2, r2, key)
    direct = pedersen_commit([(a + b) % ORDER for a, b in zip(m1, m2)], r1 + r2, key)
    assert total.point == direct.point
    assert total.opens_to(key, total.messages, total.randomness)


def test_openings_and_perturbations():
    rng = random.Random(5)
    key = CommitmentKey.pedersen(slots=5)
    for _ in range(1000):
        msgs = [rng.randrange(ORDER) for _ in range(5)]
        r = rng.randrange(ORDER)
        c = pedersen_commit(msgs, r, key)
        assert c.point == msm(list(key.bases) + [key.blinding], msgs + [r])
        assert c.opens_to(key, msgs, r)
        bad = list(msgs)
        j = rng.randrange(5)
        bad[j] = (bad[j] + rng.randrange(1, ORDER)) % ORDER
        assert not c.opens_to(key, bad, r)


def test_public_view_drops_opening():
    c = pedersen_commit([1, 2], 3, CommitmentKey.pedersen(slots=2))
    pub = c.public()
    assert pub == c and not pub.has_opening
    assert not (pub + c).has_opening


def test_key_limits():
    with pytest.raises(ValueError):
        CommitmentKey.pedersen(slots=7)
    key = CommitmentKey.pedersen(slots=2)
    with pytest.raises(ValueError):
        key.commit_point([1, 2, 3])
    unblinded = CommitmentKey(key.bases, None)
    with pytest.raises(ValueError):
        unblinded.commit_point([1], 5)
    assert unblinded.commit_point([1]) == key.bases[0]


def test_hiding_randomness_changes_point():
    key = CommitmentKey.pedersen(slots=1)
    assert pedersen_commit([7], 1, key).point != pedersen_commit([7], 2, key).point
