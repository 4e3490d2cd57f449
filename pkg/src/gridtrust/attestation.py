"""Software challenge-response attestation and per-window scheduling.

The checksum follows the SWATT pattern: the challenge seeds a pseudorandom
walk over program memory and the bytes visited are folded into a hash. The
walk is built from whole permutations of the memory offsets, so a walk of
length ``>= L`` touches every byte and any single-byte modification changes
the response.
"""
from __future__ import annotations

import functools
import hashlib
import hmac
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import InvalidImageError

CHECKSUM_HASH = "blake2b"


@dataclass(frozen=True)
class ProgramImage:
    data: bytes
    tamper_mask: Optional[frozenset] = None

    def __post_init__(self):
        if len(self.data) == 0:
            raise InvalidImageError("program image is empty")

    def __len__(self):
        return len(self.data)

    def tampered(self, offsets: Iterable[int]) -> "ProgramImage":
        """Copy of this image with the byte at each offset inverted."""
        buf = bytearray(self.data)
        offsets = frozenset(int(o) for o in offsets)
        for o in offsets:
            buf[o] ^= 0xFF
        return ProgramImage(bytes(buf), offsets)

    @classmethod
    def random(cls, size: int, rng: np.random.Generator) -> "ProgramImage":
        return cls(rng.bytes(size))


@dataclass(frozen=True)
class Challenge:
    seed: int
    walk_length: int


@dataclass(frozen=True)
class AttestationReport:
    verifier: int
    attester: int
    positive: bool
    tick: int = 0

    @property
    def outcome(self) -> str:
        return "positive" if self.positive else "negative"


@dataclass(frozen=True)
class ScheduledAttestation:
    tick: int
    verifier: int
    attester: int


def make_challenge(image_size: int, rng: np.random.Generator) -> Challenge:
    seed = int(rng.integers(0, 2**64, dtype=np.uint64))
    return Challenge(seed, 2 * image_size)


@functools.lru_cache(maxsize=8)
def _walk(seed: int, size: int, length: int) -> np.ndarray:
    g = np.random.Generator(np.random.PCG64(seed))
    reps = -(-length // size)
    addr = np.concatenate([g.permutation(size) for _ in range(reps)])[:length]
    addr.flags.writeable = False
    return addr


@functools.lru_cache(maxsize=8)
def _digest(data: bytes, seed: int, length: int) -> bytes:
    # cached: verifier and an unmodified attester hash the same challenge back to back
    mem = np.frombuffer(data, dtype=np.uint8)
    addr = _walk(seed, len(data), length)
    h = hashlib.new(CHECKSUM_HASH)
    h.update(seed.to_bytes(8, "big"))
    h.update(addr.astype("<u4").tobytes())
    h.update(mem[addr].tobytes())
    return h.digest()


def compute_response(image: ProgramImage, ch: Challenge) -> bytes:
    if image is None or len(image.data) == 0:
        raise InvalidImageError("program image is empty")
    size = len(image.data)
    if ch.walk_length < size:
        raise ValueError(
            f"walk_length {ch.walk_length} does not cover image of {size} bytes")
    return _digest(image.data, ch.seed, ch.walk_length)


def attest(verifier: int, reference: ProgramImage, attester,
           rng: np.random.Generator, tick: int = 0,
           policy: Optional[Callable[[int, bool], bool]] = None
           ) -> Optional[AttestationReport]:
    """Challenge ``attester`` and compare its response to the local expectation.

    ``attester`` must expose ``agent``, ``respond(challenge)`` and an
    ``active`` flag; an inactive attester yields ``None`` (no report).
    ``policy(attester_id, honest_outcome) -> outcome`` lets a dishonest
    verifier replace the outcome it broadcasts.
    """
    if not getattr(attester, "active", True):
        return None
    if verifier == attester.agent:
        raise ValueError("an agent cannot attest itself")
    ch = make_challenge(len(reference), rng)
    expected = compute_response(reference, ch)
    positive = hmac.compare_digest(attester.respond(ch), expected)
    if policy is not None:
        positive = bool(policy(attester.agent, positive))
    return AttestationReport(verifier, attester.agent, positive, tick)


def schedule_window(active: Iterable[int], window: int, rng: np.random.Generator,
                    start: int = 0,
                    choose_attester: Optional[Callable[[int, list], int]] = None,
                    random_verifier: bool = False) -> list[ScheduledAttestation]:
    """Schedule one window of attestations over ticks ``[start, start+window)``.

    By default each active agent verifies exactly once, at a uniformly random
    tick, against an attester drawn uniformly from the other active agents.
    ``choose_attester(verifier, candidates)`` may override the draw for a
    verifier (malicious strategies); returning None keeps the uniform draw.
    With ``random_verifier`` every one of the ``len(active)`` events picks
    its verifier uniformly instead.
    """
    agents = sorted(active)
    n = len(agents)
    if n < 2:
        return []
    if random_verifier:
        verifiers = [agents[i] for i in rng.integers(0, n, size=n)]
    else:
        verifiers = agents
    pos = {a: i for i, a in enumerate(agents)}
    ticks = rng.integers(start, start + window, size=n)
    events = []
    for v, t in zip(verifiers, ticks):
        a = None
        if choose_attester is not None:
            a = choose_attester(v, [x for x in agents if x != v])
        if a is None:
            r = int(rng.integers(0, n - 1))
            a = agents[r if r < pos[v] else r + 1]
        events.append(ScheduledAttestation(int(t), v, a))
    events.sort(key=lambda e: (e.tick, e.verifier, e.attester))
    return events
