import hashlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridtrust.commitment import (DIGEST_SIZE, HASH_NAME, Commitment, Opening,
                                  commit, random_nonce, verify)
from gridtrust.errors import InvalidNonceError

NONCE = bytes(range(32))


def test_digest_matches_direct_hash():
    expected = hashlib.sha3_256((3).to_bytes(4, "big") + NONCE).digest()
    assert commit(3, NONCE).digest == expected
    assert HASH_NAME == "sha3_256"
    assert DIGEST_SIZE == 32


def test_deterministic():
    assert commit(3, NONCE) == commit(3, NONCE)


def test_value_changes_digest():
    assert commit(3, NONCE) != commit(4, NONCE)


def test_nonce_changes_digest():
    other = bytes(reversed(NONCE))
    assert commit(3, NONCE) != commit(3, other)


def test_short_nonce_rejected():
    with pytest.raises(InvalidNonceError):
        commit(1, b"x" * 15)
    commit(1, b"x" * 16)


def test_value_range():
    with pytest.raises(ValueError):
        commit(-1, NONCE)
    with pytest.raises(ValueError):
        commit(2**32, NONCE)


def test_verify_examples():
    n1, n2 = NONCE, bytes(32)
    c = commit(2, n1)
    assert verify(c, Opening(2, n1))
    assert not verify(c, Opening(3, n1))
    assert not verify(c, Opening(2, n2))


def test_verify_malformed_is_false():
    c = commit(2, NONCE)
    assert not verify(c, Opening(2, b"short"))
    assert not verify(c, Opening(-5, NONCE))
    assert not verify(c, Opening("2", NONCE))
    assert not verify(Commitment(b""), Opening(2, NONCE))


def test_random_nonce_seeded():
    a = random_nonce(np.random.default_rng(9))
    b = random_nonce(np.random.default_rng(9))
    assert a == b and len(a) >= 16
    g = np.random.default_rng(9)
    assert random_nonce(g) != random_nonce(g)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.binary(min_size=16, max_size=64))
def test_round_trip(value, nonce):
    assert verify(commit(value, nonce), Opening(value, nonce))


def test_binding_no_shared_digests():
    g = np.random.default_rng(0)
    values = g.integers(0, 2**32, size=100_000)
    seen = {}
    for v in values:
        nonce = random_nonce(g)
        d = commit(int(v), nonce).digest
        assert seen.setdefault(d, (int(v), nonce)) == (int(v), nonce)
    assert len(seen) == 100_000


def test_digest_bytes_unbiased():
    g = np.random.default_rng(1)
    n = 100_000
    digests = np.frombuffer(
        b"".join(commit(int(v), random_nonce(g)).digest
                 for v in g.integers(0, 5, size=n)), dtype=np.uint8).reshape(n, -1)
    # each byte position uniform on 0..255: mean 127.5, sd 73.9
    z = (digests.mean(axis=0) - 127.5) / (np.sqrt((256**2 - 1) / 12) / np.sqrt(n))
    assert np.max(np.abs(z)) < 5
