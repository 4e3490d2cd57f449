"""Mean-field analysis of the trust iteration.

The state holds the trust that each honest observer places in every agent,
shape ``(n_honest, n_agents)``, rows ordered by honest agent index. Under
uniformly random (verifier, attester) pairs and an attestation primitive that
reveals the true labeling, the iteration tracks the projected vector field

    h_ij = e_j (pH - pM) / (N (N - 1))

with ``pH``/``pM`` the observer's summed trust in honest/malicious agents
other than itself and ``j``. On the faces of the unit cube only the inward
component survives. The stochastic model here leaves an observer's row
untouched by reports it authored itself; that is what makes ``pH`` exclude
the observer.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import StepTooLargeError

CORRECT = "correct_identification"
INVERTED = "inverted"
OTHER = "other"


class HonestyLabeling:
    """Ground-truth labels ``e_j = +1`` (honest) or ``-1`` (malicious)."""

    def __init__(self, e):
        e = np.asarray(e, dtype=int)
        if e.ndim != 1 or not np.all(np.isin(e, (-1, 1))):
            raise ValueError("labels must be a vector of +1/-1")
        if not np.any(e == 1):
            raise ValueError("at least one agent must be honest")
        self.e = e
        self.honest = np.flatnonzero(e == 1)
        self.malicious = np.flatnonzero(e == -1)
        self._row = {int(a): r for r, a in enumerate(self.honest)}

    @classmethod
    def from_malicious(cls, n: int, malicious: Iterable[int]) -> "HonestyLabeling":
        e = np.ones(n, dtype=int)
        e[list(malicious)] = -1
        return cls(e)

    @property
    def n(self) -> int:
        return len(self.e)

    def row(self, i: int) -> int:
        try:
            return self._row[int(i)]
        except KeyError:
            raise ValueError(f"agent {i} is not honest") from None

    def admissible(self) -> bool:
        """Malicious count strictly below ``N/2 - 1``."""
        return 2 * len(self.malicious) < self.n - 2


def all_ones(lab: HonestyLabeling) -> np.ndarray:
    return np.ones((len(lab.honest), lab.n))


def pin_diagonal(state, lab):
    state[np.arange(len(lab.honest)), lab.honest] = 1.0
    return state


def target_state(lab: HonestyLabeling) -> np.ndarray:
    """``p*``: every honest observer trusts exactly the honest agents."""
    return np.tile((lab.e == 1).astype(float), (len(lab.honest), 1))


def inverted_state(lab: HonestyLabeling) -> np.ndarray:
    """``q``: trust only the malicious agents (own entry kept at 1)."""
    q = np.tile((lab.e == -1).astype(float), (len(lab.honest), 1))
    return pin_diagonal(q, lab)


def partial_sums(state, lab: HonestyLabeling, i: int, j: int) -> tuple[float, float]:
    row = np.asarray(state)[lab.row(i)]
    keep = np.ones(lab.n, dtype=bool)
    keep[[i, j]] = False
    pH = float(row[keep & (lab.e == 1)].sum())
    pM = float(row[keep & (lab.e == -1)].sum())
    return pH, pM


def _interior(state, lab):
    """Interior branch ``e_j (pH - pM) / (N(N-1))`` for every entry."""
    state = np.asarray(state, dtype=float)
    n = lab.n
    hmask = lab.e == 1
    # observer's own (pinned) entry is honest and excluded from pH
    s_h = state[:, hmask].sum(axis=1, keepdims=True) - 1.0
    s_m = state[:, ~hmask].sum(axis=1, keepdims=True)
    pH = s_h - state * hmask
    pM = s_m - state * (~hmask)
    return lab.e * (pH - pM) / (n * (n - 1))


def drift(state, lab: HonestyLabeling) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    v = _interior(state, lab)
    h = np.where(state >= 1.0, np.minimum(v, 0.0),
                 np.where(state <= 0.0, np.maximum(v, 0.0), v))
    h[np.arange(len(lab.honest)), lab.honest] = 0.0
    return h


def frechet_projection(p, direction) -> np.ndarray:
    """Directional derivative of the unit-cube projection at ``p``."""
    p = np.asarray(p, dtype=float)
    d = np.asarray(direction, dtype=float)
    blocked = ((p >= 1.0) & (d > 0)) | ((p <= 0.0) & (d < 0))
    return np.where(blocked, 0.0, d)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def integrate(state0, lab: HonestyLabeling, horizon: float = 200.0,
              dt: float = 0.01, record_every: int = 100) -> Trajectory:
    """Projected forward-Euler integration, ``p <- clamp(p + dt * h_int(p))``.

    Integration stops early once a step leaves the state exactly unchanged
    (a fixed point of the projected map); the final sample is then repeated
    at ``horizon``.
    """
    if dt <= 0 or horizon <= 0:
        raise ValueError("dt and horizon must be positive")
    if dt >= 1:
        raise StepTooLargeError(f"dt={dt} must be below 1")
    p = pin_diagonal(np.array(state0, dtype=float), lab)
    steps = int(round(horizon / dt))
    times, states = [0.0], [p.copy()]
    diag = (np.arange(len(lab.honest)), lab.honest)
    for s in range(1, steps + 1):
        nxt = np.clip(p + dt * _interior(p, lab), 0.0, 1.0)
        nxt[diag] = 1.0
        if np.array_equal(nxt, p):
            break
        p = nxt
        if s % record_every == 0:
            times.append(s * dt)
            states.append(p.copy())
    if times[-1] != steps * dt:
        times.append(steps * dt)
        states.append(p.copy())
    return Trajectory(np.array(times), np.array(states))


def classify_settlement(traj, lab: HonestyLabeling, tol: float = 1e-6) -> str:
    final = traj.final if isinstance(traj, Trajectory) else np.asarray(traj)
    if final.ndim == 3:
        final = final[-1]
    if np.max(np.abs(final - target_state(lab))) <= tol:
        return CORRECT
    if np.max(np.abs(final - inverted_state(lab))) <= tol:
        return INVERTED
    return OTHER


def _draw_pairs(n, size, rng):
    k = rng.integers(0, n, size=size)
    j = (k + 1 + rng.integers(0, n - 1, size=size)) % n
    return k, j


def mean_drift_check(state, lab: HonestyLabeling, samples: int,
                     rng: np.random.Generator, step: float = 1e-3,
                     return_stderr: bool = False, chunk: int = 200_000):
    """Monte-Carlo estimate of ``E[projected one-step increment] / step``.

    Pairs (verifier ``k``, attester ``j``) are uniform over ordered pairs of
    distinct agents; outcomes follow the true labels (a malicious verifier
    vouches for malicious attesters and accuses honest ones).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    state = np.asarray(state, dtype=float)
    nh, n = state.shape
    rows = np.arange(nh)
    total = np.zeros((nh, n))
    total_sq = np.zeros((nh, n))
    done = 0
    while done < samples:
        size = min(chunk, samples - done)
        k, j = _draw_pairs(n, size, rng)
        sign = (lab.e[k] * lab.e[j]).astype(float)
        # (size, nh) increments of column j at every honest observer row
        raw = step * sign[:, None] * state[:, k].T
        cur = state[:, j].T
        inc = (np.clip(cur + raw, 0.0, 1.0) - cur) / step
        own = (lab.honest[None, :] == k[:, None]) | (lab.honest[None, :] == j[:, None])
        inc[own] = 0.0
        flat = (rows[None, :] * n + j[:, None]).ravel()
        total += np.bincount(flat, weights=inc.ravel(), minlength=nh * n).reshape(nh, n)
        total_sq += np.bincount(flat, weights=(inc ** 2).ravel(),
                                minlength=nh * n).reshape(nh, n)
        done += size
    mean = total / samples
    if not return_stderr:
        return mean
    var = np.maximum(total_sq / samples - mean ** 2, 0.0)
    return mean, np.sqrt(var / samples)


def simulate_iterates(lab: HonestyLabeling, runs: int, steps: int,
                      rng: np.random.Generator, rule: str = "diminishing",
                      start: Optional[np.ndarray] = None,
                      t0: Optional[int] = None) -> np.ndarray:
    """Run ``runs`` independent copies of the stochastic trust iteration.

    Returns final states, shape ``(runs, n_honest, n_agents)``. ``rule`` is
    ``"diminishing"`` (``a(t) = 1/(t+1)``) or ``"fixed"`` (``a = 1/N``).
    The diminishing counter starts at ``t0``, by default ``N - 1`` so the
    first step equals the fixed step ``1/N``.
    """
    nh, n = len(lab.honest), lab.n
    t0 = n - 1 if t0 is None else t0
    p0 = all_ones(lab) if start is None else np.asarray(start, dtype=float)
    p = np.broadcast_to(pin_diagonal(p0.copy(), lab), (runs, nh, n)).copy()
    r_idx = np.arange(runs)[:, None]
    h_idx = np.arange(nh)[None, :]
    for t in range(steps):
        a = 1.0 / (t0 + t + 1) if rule == "diminishing" else 1.0 / n
        k, j = _draw_pairs(n, runs, rng)
        sign = (lab.e[k] * lab.e[j]).astype(float)
        w = p[r_idx, h_idx, k[:, None]]
        col = p[r_idx, h_idx, j[:, None]]
        mask = (lab.honest[None, :] != k[:, None]) & (lab.honest[None, :] != j[:, None])
        new = np.clip(col + a * sign[:, None] * w, 0.0, 1.0)
        p[r_idx, h_idx, j[:, None]] = np.where(mask, new, col)
    return p
