"""Linear Kalman-filter state estimation from PMU phasors.

The state is the rectangular bus-voltage vector interleaved as
``[Re V1, Im V1, Re V2, Im V2, ...]``. Each reporting agent contributes its
bus voltage and the current leaving its bus on every incident branch, all of
which are linear in that state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

import numpy as np
import scipy.linalg

from .errors import (CannotEstimateError, InvalidAgentError,
                     NumericalFailureError)
from .grid import GridCase

SIGMA = 0.01
PROCESS_VAR = 1e-6
PRIOR_VAR = 1e-2
BIAS = 0.1


@dataclass
class KalmanState:
    x: np.ndarray
    P: np.ndarray
    innovation: Optional[np.ndarray] = None

    @classmethod
    def flat_start(cls, n_bus: int, prior_var: float = PRIOR_VAR) -> "KalmanState":
        x = np.zeros(2 * n_bus)
        x[0::2] = 1.0
        return cls(x, prior_var * np.eye(2 * n_bus))


@dataclass
class MeasurementSet:
    z: np.ndarray
    R: np.ndarray
    agents: list[int]


@dataclass
class MeasurementModel:
    """Real measurement matrix plus the row block owned by each agent."""

    H: np.ndarray
    blocks: dict[int, slice]
    voltage_rows: dict[int, slice]


def to_rect(v: np.ndarray) -> np.ndarray:
    x = np.empty(2 * len(v))
    x[0::2] = v.real
    x[1::2] = v.imag
    return x


def to_complex(x: np.ndarray) -> np.ndarray:
    return x[0::2] + 1j * x[1::2]


def agent_phasor_rows(case: GridCase, agent: int) -> np.ndarray:
    """Complex rows (over bus voltages) for one agent's voltage and currents."""
    try:
        bus = case.agent_bus[agent]
    except KeyError:
        raise InvalidAgentError(f"agent {agent} has no bus") from None
    rows = []
    v = np.zeros(case.n_bus, dtype=complex)
    v[bus - 1] = 1.0
    rows.append(v)
    for br in case.branches:
        if bus not in (br.from_bus, br.to_bus):
            continue
        other = br.to_bus if bus == br.from_bus else br.from_bus
        c = np.zeros(case.n_bus, dtype=complex)
        c[bus - 1] = br.y + br.ysh / 2
        c[other - 1] = -br.y
        rows.append(c)
    return np.array(rows)


def _expand(crows: np.ndarray) -> np.ndarray:
    m, n = crows.shape
    H = np.zeros((2 * m, 2 * n))
    H[0::2, 0::2] = crows.real
    H[0::2, 1::2] = -crows.imag
    H[1::2, 0::2] = crows.imag
    H[1::2, 1::2] = crows.real
    return H


def measurement_model(case: GridCase, reporting: Iterable[int]) -> MeasurementModel:
    reporting = sorted(reporting)
    if not reporting:
        raise CannotEstimateError("no reporting agents")
    blocks, vrows, parts = {}, {}, []
    start = 0
    for a in reporting:
        Ha = _expand(agent_phasor_rows(case, a))
        blocks[a] = slice(start, start + len(Ha))
        vrows[a] = slice(start, start + 2)
        parts.append(Ha)
        start += len(Ha)
    return MeasurementModel(np.vstack(parts), blocks, vrows)


def build_measurement_matrix(case: GridCase, reporting: Iterable[int]) -> np.ndarray:
    return measurement_model(case, reporting).H


def synthesize(model: MeasurementModel, v_true: np.ndarray,
               rng: np.random.Generator, sigma: float = SIGMA,
               bias: Optional[Mapping[int, float]] = None) -> MeasurementSet:
    """Noisy measurements of ``v_true``; agents in ``bias`` offset their voltage."""
    z = model.H @ to_rect(v_true) + sigma * rng.standard_normal(model.H.shape[0])
    for a, b in (bias or {}).items():
        if a in model.voltage_rows:
            z[model.voltage_rows[a]] += b
    return MeasurementSet(z, sigma ** 2 * np.eye(len(z)), sorted(model.blocks))


def _update_gain(P, H, R):
    S = H @ P @ H.T + R
    S = (S + S.T) / 2
    try:
        cho = scipy.linalg.cho_factor(S)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailureError(f"innovation covariance not invertible: {exc}") from exc
    K = scipy.linalg.cho_solve(cho, H @ P).T
    return K, (np.eye(len(P)) - K @ H) @ P


def _update_information(P, H, R):
    # Same posterior as the gain form, K = P H^T (H P H^T + R)^-1, but
    # conditioned by P and H^T R^-1 H rather than by the innovation
    # covariance, which is near-singular when P is diffuse and R tiny.
    # Raises LinAlgError when P is not positive definite.
    n = len(P)
    Pinv = scipy.linalg.cho_solve(scipy.linalg.cho_factor(P), np.eye(n))
    HtRinv = scipy.linalg.cho_solve(scipy.linalg.cho_factor(R), H).T
    post = scipy.linalg.cho_factor(Pinv + HtRinv @ H)
    P_new = scipy.linalg.cho_solve(post, np.eye(n))
    return P_new @ HtRinv, P_new


def kalman_step(ks: KalmanState, z, H: np.ndarray, Q,
                R: Optional[np.ndarray] = None) -> KalmanState:
    """Identity-dynamics predict followed by a measurement update.

    The update is the standard gain ``K = P H^T (H P H^T + R)^-1``; when the
    predicted covariance is positive definite it is evaluated in the
    equivalent information form for numerical robustness.

    ``z`` is a MeasurementSet or a plain vector (then ``R`` is required);
    ``Q`` may be a matrix or a scalar variance.
    """
    if isinstance(z, MeasurementSet):
        R = z.R if R is None else R
        z = z.z
    if R is None:
        raise ValueError("measurement covariance R is required")
    n = len(ks.x)
    Q = Q * np.eye(n) if np.ndim(Q) == 0 else Q
    if H.shape != (len(z), n):
        raise ValueError(f"H has shape {H.shape}, expected ({len(z)}, {n})")
    P = ks.P + Q
    nu = z - H @ ks.x
    try:
        K, P = _update_information(P, H, R)
    except np.linalg.LinAlgError:
        K, P = _update_gain(P, H, R)
    x = ks.x + K @ nu
    P = (P + P.T) / 2
    return KalmanState(x, P, nu)


def squared_error(x_est, x_true) -> float:
    x_est, x_true = np.asarray(x_est), np.asarray(x_true)
    if x_est.shape != x_true.shape:
        raise ValueError(f"length mismatch {x_est.shape} vs {x_true.shape}")
    return float(np.sum((x_est - x_true) ** 2))


def max_abs_error(x_est, x_true) -> float:
    x_est, x_true = np.asarray(x_est), np.asarray(x_true)
    if x_est.shape != x_true.shape:
        raise ValueError(f"length mismatch {x_est.shape} vs {x_true.shape}")
    return float(np.max(np.abs(x_est - x_true)))


@dataclass
class SeResult:
    squared_error: np.ndarray
    max_abs_error: np.ndarray
    final: KalmanState
    innovations: list


def run_se(case: GridCase, trusted: Iterable[int], samples: int,
           ks0: KalmanState, rng: np.random.Generator,
           malicious: Iterable[int] = (), attack_start: int = 0,
           bias: float = BIAS, sigma: float = SIGMA, q: float = PROCESS_VAR,
           v_true: Optional[np.ndarray] = None) -> SeResult:
    """Filter ``samples`` synthetic PMU snapshots using only ``trusted`` agents.

    Malicious agents that are still trusted add ``bias`` to both components
    of their voltage reading from sample ``attack_start`` on.
    """
    trusted = sorted(trusted)
    if not trusted:
        raise CannotEstimateError("empty trusted set")
    model = measurement_model(case, trusted)
    if v_true is None:
        v_true = case.true_states(samples, rng)
    fabricated = [a for a in malicious if a in model.blocks]
    ks = ks0
    se, mae, innov = [], [], []
    for s in range(samples):
        b = {a: bias for a in fabricated} if s >= attack_start else None
        meas = synthesize(model, v_true[s], rng, sigma, b)
        ks = kalman_step(ks, meas, model.H, q)
        x_true = to_rect(v_true[s])
        se.append(squared_error(ks.x, x_true))
        mae.append(max_abs_error(ks.x, x_true))
        innov.append(ks.innovation)
    return SeResult(np.array(se), np.array(mae), ks, innov)
