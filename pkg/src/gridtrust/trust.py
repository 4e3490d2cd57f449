"""Trust bookkeeping driven by attestation reports, plus majority eviction.

Every observer ``i`` keeps a trust value ``p[i, j]`` in ``[0, 1]`` for every
agent ``j``; ``p[i, i]`` is pinned at 1. When verifier ``k`` reports on
attester ``j``, each observer moves ``p[i, j]`` by ``+/- step * p[i, k]`` and
projects back onto ``[0, 1]``. The fixed rule uses ``step = 1/N``; the
diminishing rule uses ``1/(t+1)`` with one global report counter ``t``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .attestation import AttestationReport
from .errors import InvalidReportError


def project_unit(x):
    """Clamp onto ``[0, 1]``; works elementwise on arrays."""
    if np.ndim(x) == 0:
        return min(1.0, max(0.0, float(x)))
    return np.clip(x, 0.0, 1.0)


@dataclass
class StepRule:
    """Step size source; ``n`` tracks the active agent count.

    The diminishing counter ``t`` starts at ``n - 1`` unless given, so the
    first diminishing step equals the fixed step ``1/n``.
    """

    kind: str = "fixed"
    n: int = 1
    t: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("fixed", "diminishing"):
            raise ValueError(f"unknown step rule {self.kind!r}")
        if self.n < 1:
            raise ValueError("step rule needs n >= 1")
        if self.t is None:
            self.t = self.n - 1 if self.kind == "diminishing" else 0

    def step(self) -> float:
        if self.kind == "fixed":
            return 1.0 / self.n
        return 1.0 / (self.t + 1)

    def advance(self):
        if self.kind == "diminishing":
            self.t += 1


class TrustMatrix:
    """Dense ``(observer, subject)`` trust table with a pinned unit diagonal."""

    def __init__(self, p):
        p = np.array(p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError(f"trust matrix must be square, got {p.shape}")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("trust values must lie in [0, 1]")
        np.fill_diagonal(p, 1.0)
        self.p = p

    @classmethod
    def ones(cls, n: int) -> "TrustMatrix":
        return cls(np.ones((n, n)))

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def __getitem__(self, key):
        return self.p[key]

    def copy(self) -> "TrustMatrix":
        return TrustMatrix(self.p.copy())


def update_column(m: TrustMatrix, attester: int, verifier: int,
                  signed_step: float, rows) -> None:
    """In-place ``p[rows, attester] <- [p + signed_step * p[rows, verifier]]``."""
    rows = np.asarray(rows, dtype=np.intp)
    rows = rows[rows != attester]
    if rows.size == 0:
        return
    col = m.p[rows, attester] + signed_step * m.p[rows, verifier]
    m.p[rows, attester] = np.minimum(np.maximum(col, 0.0), 1.0)


def apply_report(m: TrustMatrix, report: AttestationReport, rule: StepRule,
                 observers: Optional[Iterable[int]] = None) -> TrustMatrix:
    """Apply one broadcast report to every observer row (in place).

    ``observers`` defaults to every row. The diminishing counter advances
    once per call.
    """
    j, k = report.attester, report.verifier
    if j == k:
        raise InvalidReportError(f"agent {j} cannot attest itself")
    rows = np.arange(m.n) if observers is None else np.fromiter(observers, np.intp)
    step = rule.step()
    update_column(m, j, k, step if report.positive else -step, rows)
    rule.advance()
    return m


def eviction_votes(m: TrustMatrix, subject: int, active: Iterable[int]) -> int:
    """Number of active observers other than ``subject`` holding zero trust in it."""
    rows = np.asarray(active if isinstance(active, np.ndarray) else list(active), dtype=np.intp)
    rows = rows[rows != subject]
    if rows.size == 0:
        return 0
    return int(np.count_nonzero(m.p[rows, subject] == 0.0))


def check_eviction(votes: int, n_active: int) -> bool:
    """Strict majority of all active agents, the accused included."""
    return 2 * votes > n_active
