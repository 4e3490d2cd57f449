"""Hash-based commit/reveal used to bind election contributions.

A commitment is ``H(encode(value) || nonce)`` where ``encode`` is the 4-byte
big-endian form of the value and ``H`` is SHA3-256.
"""
from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

import numpy as np

from .errors import InvalidNonceError

HASH_NAME = "sha3_256"
DIGEST_SIZE = hashlib.new(HASH_NAME).digest_size
NONCE_SIZE = 32
MIN_NONCE_SIZE = 16


@dataclass(frozen=True)
class Commitment:
    digest: bytes

    def hex(self) -> str:
        return self.digest.hex()


@dataclass(frozen=True)
class Opening:
    value: int
    nonce: bytes


def _encode(value: int) -> bytes:
    return int(value).to_bytes(4, "big")


def commit(value: int, nonce: bytes) -> Commitment:
    """Commit to a non-negative 32-bit ``value`` with a random ``nonce``.

    Raises InvalidNonceError if the nonce is shorter than 16 bytes.
    """
    if len(nonce) < MIN_NONCE_SIZE:
        raise InvalidNonceError(
            f"nonce must be at least {MIN_NONCE_SIZE} bytes, got {len(nonce)}")
    if value < 0 or value >= 2**32:
        raise ValueError(f"value {value} does not fit in 32 bits")
    h = hashlib.new(HASH_NAME)
    h.update(_encode(value))
    h.update(nonce)
    return Commitment(h.digest())


def verify(c: Commitment, o: Opening) -> bool:
    """True iff ``o`` opens ``c``. Malformed openings verify as False."""
    try:
        expected = commit(o.value, o.nonce)
    except (InvalidNonceError, ValueError, TypeError):
        return False
    return hmac.compare_digest(expected.digest, c.digest)


def random_nonce(rng: np.random.Generator, size: int = NONCE_SIZE) -> bytes:
    if size < MIN_NONCE_SIZE:
        raise InvalidNonceError(f"nonce size {size} below {MIN_NONCE_SIZE}")
    return rng.bytes(size)
