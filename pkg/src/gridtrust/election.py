"""Broadcast leader election with committed contributions.

Every participant announces a fresh 32-bit id, commits to a contribution
``C_i`` in ``{0..N-1}``, broadcasts the commitment, then reveals. Each
participant independently checks the reveals, sums the valid contributions
modulo the number of valid revealers, and picks the id at that position of the
sorted id list (0-based, so ``k = 0`` is the smallest id).

Agents whose reveal does not open their commitment are dropped from both the
sum and the candidate list.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .commitment import Commitment, Opening, commit, random_nonce, verify
from .errors import (ElectionFailedError, InvalidContributionError,
                     TooFewAgentsError)

ID_SPACE = 2**32


@dataclass
class ElectionParticipant:
    """One agent's side of the protocol.

    ``behavior`` is ``"honest"``, ``"equivocate"`` (reveals a different value
    than it committed to) or ``"silent"`` (never announces an id).
    """

    agent: int
    behavior: str = "honest"

    @property
    def honest(self) -> bool:
        return self.behavior == "honest"

    def choose(self, n: int, rng: np.random.Generator) -> Opening:
        return Opening(int(rng.integers(0, n)), random_nonce(rng))

    def reveal(self, opening: Opening, n: int) -> Opening:
        if self.behavior == "equivocate":
            return Opening((opening.value + 1) % n, opening.nonce)
        return opening


@dataclass
class ElectionTranscript:
    agents: list[int]
    ids: list[int]
    commitments: list[Commitment]
    openings: list[Opening]
    k: int
    leader: int
    leader_agent: int
    invalid_revealers: set[int] = field(default_factory=set)
    tick: int = 0

    def to_record(self) -> dict:
        return {
            "tick": self.tick,
            "agents": list(self.agents),
            "ids": list(self.ids),
            "commitments": [c.hex() for c in self.commitments],
            "openings": [{"value": o.value, "nonce": o.nonce.hex()}
                         for o in self.openings],
            "k": self.k,
            "leader_id": self.leader,
            "leader_agent": self.leader_agent,
            "invalid_revealers": sorted(self.invalid_revealers),
        }


def draw_ids(n: int, rng: np.random.Generator) -> list[int]:
    """Draw ``n`` distinct 32-bit ids.

    Colliding entries are redrawn until all ids are distinct.
    """
    if n < 2:
        raise TooFewAgentsError(f"need at least 2 agents, got {n}")
    ids = rng.integers(0, ID_SPACE, size=n, dtype=np.uint64)
    while True:
        _, first = np.unique(ids, return_index=True)
        if len(first) == n:
            return [int(v) for v in ids]
        dup = np.ones(n, dtype=bool)
        dup[first] = False
        ids[dup] = rng.integers(0, ID_SPACE, size=int(dup.sum()), dtype=np.uint64)


def compute_leader_index(contributions: Sequence[int], n: int,
                         upper: int | None = None) -> int:
    """``(sum(contributions)) mod n``.

    Each contribution must lie in ``[0, upper - 1]``; ``upper`` defaults to
    ``n``. It differs from ``n`` only when invalid revealers shrank the
    modulus below the range the contributions were drawn from.
    """
    upper = n if upper is None else upper
    if n < 1:
        raise InvalidContributionError(f"modulus must be positive, got {n}")
    total = 0
    for c in contributions:
        if not 0 <= c < upper:
            raise InvalidContributionError(
                f"contribution {c} outside [0, {upper - 1}]")
        total += int(c)
    return total % n


def select_leader(sorted_ids: Sequence[int], k: int) -> int:
    if any(a >= b for a, b in zip(sorted_ids, sorted_ids[1:])):
        raise ValueError("ids must be strictly ascending")
    if not 0 <= k < len(sorted_ids):
        raise ValueError(f"k={k} outside [0, {len(sorted_ids) - 1}]")
    return sorted_ids[k]


def tally(ids: Sequence[int], commitments: Sequence[Commitment],
          openings: Sequence[Opening], n: int) -> tuple[int, int, set[int]]:
    """Derive ``(k, leader_id, invalid positions)`` from the broadcast record.

    This is the computation every agent runs locally on its own copy of the
    broadcasts.
    """
    invalid = set()
    valid_c = []
    candidates = []
    for pos, (c, o) in enumerate(zip(commitments, openings)):
        if o is None or not verify(c, o) or not 0 <= o.value < n:
            invalid.add(pos)
            continue
        valid_c.append(o.value)
        candidates.append(ids[pos])
    if len(candidates) < 2:
        raise ElectionFailedError(
            f"only {len(candidates)} valid revealer(s)")
    k = compute_leader_index(valid_c, len(candidates), upper=n)
    return k, select_leader(sorted(candidates), k), invalid


def run_election(agents: Sequence[ElectionParticipant],
                 rng: np.random.Generator, tick: int = 0) -> ElectionTranscript:
    """Run one election round among ``agents``.

    Silent agents are treated as excluded after the id-announcement timeout.
    Raises ElectionFailedError when fewer than two agents reveal validly.
    """
    present = [a for a in agents if a.behavior != "silent"]
    if len(present) < 2:
        raise ElectionFailedError(f"only {len(present)} agent(s) announced ids")
    n = len(present)

    ids = draw_ids(n, rng)
    committed = [a.choose(n, rng) for a in present]
    commitments = [commit(o.value, o.nonce) for o in committed]
    openings = [a.reveal(o, n) for a, o in zip(present, committed)]

    views = []
    for a in present:
        if not a.honest:
            continue
        # each honest agent tallies its own copy of the broadcasts
        views.append(tally(list(ids), list(commitments), list(openings), n))
    if not views:
        views.append(tally(ids, commitments, openings, n))
    k, leader, invalid = views[0]
    if any(v != views[0] for v in views[1:]):
        raise ElectionFailedError("honest agents disagree on the outcome")

    leader_pos = ids.index(leader)
    return ElectionTranscript(
        agents=[a.agent for a in present],
        ids=ids,
        commitments=commitments,
        openings=openings,
        k=k,
        leader=leader,
        leader_agent=present[leader_pos].agent,
        invalid_revealers={present[p].agent for p in invalid},
        tick=tick,
    )
