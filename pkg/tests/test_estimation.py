import json

import numpy as np
import pytest

from gridtrust.errors import (CannotEstimateError, InvalidAgentError,
                              InvalidCaseError, NumericalFailureError)
from gridtrust.estimation import (BIAS, KalmanState, agent_phasor_rows,
                                  build_measurement_matrix, kalman_step,
                                  max_abs_error, measurement_model, run_se,
                                  squared_error, synthesize, to_complex, to_rect)
from gridtrust.grid import (Branch, GridCase, build_admittance, case_from_dict,
                            load_case, synthetic_case)


@pytest.fixture(scope="module")
def case5():
    return load_case("case5")


def admittance_oracle(case):
    """Y = A^T diag(y) A plus half the line charging at each branch end."""
    m = len(case.branches)
    A = np.zeros((m, case.n_bus))
    y = np.zeros(m, dtype=complex)
    shunt = np.zeros(case.n_bus, dtype=complex)
    for r, br in enumerate(case.branches):
        A[r, br.from_bus - 1], A[r, br.to_bus - 1] = 1, -1
        y[r] = br.y
        shunt[[br.from_bus - 1, br.to_bus - 1]] += br.ysh / 2
    return A.T @ np.diag(y) @ A + np.diag(shunt)


def wls_oracle(H, R, z):
    W = np.linalg.inv(R)
    return np.linalg.solve(H.T @ W @ H, H.T @ W @ z)


def test_single_branch_admittance():
    y = 2 - 5j
    case = GridCase(2, [Branch(1, 2, y)], {}, np.ones(2))
    np.testing.assert_array_equal(build_admittance(case), [[y, -y], [-y, y]])
    empty = GridCase(3, [], {}, np.ones(3))
    assert not build_admittance(empty).any()


def test_case5_admittance(case5):
    Y = build_admittance(case5)
    np.testing.assert_allclose(Y, admittance_oracle(case5), atol=1e-12)
    np.testing.assert_allclose(Y, Y.T)
    assert case5.n_bus == 5 and len(case5.branches) == 6


def test_dangling_branch():
    with pytest.raises(InvalidCaseError):
        build_admittance(GridCase(2, [Branch(1, 3, 1j)], {}, np.ones(2)))
    with pytest.raises(InvalidCaseError):
        case_from_dict({"n_bus": 2, "branches": [{"from": 1, "to": 1, "g": 1, "b": 0}]})


def test_case_round_trip(case5, tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(case5.to_dict()))
    again = load_case(path)
    np.testing.assert_allclose(build_admittance(again), build_admittance(case5))
    np.testing.assert_allclose(again.base_voltage, case5.base_voltage, atol=1e-5)


def test_synthetic_cases():
    big = load_case("synthetic118")
    assert big.n_bus == 118 and len(big.agents) == 118
    c = synthetic_case(30, 45, seed=2)
    Y = build_admittance(c)
    np.testing.assert_allclose(Y, Y.T)
    np.testing.assert_allclose(Y, admittance_oracle(c), atol=1e-9)


def test_voltage_rows_are_selectors(case5):
    H = build_measurement_matrix(case5, [2])
    np.testing.assert_array_equal(H[0], np.eye(10)[4])
    np.testing.assert_array_equal(H[1], np.eye(10)[5])


def test_current_row_expansion():
    y = 3 - 4j
    case = GridCase(2, [Branch(1, 2, y)], {1: 0, 2: 1}, np.ones(2))
    rows = agent_phasor_rows(case, 0)
    np.testing.assert_array_equal(rows[1], [y, -y])
    H = build_measurement_matrix(case, [0])
    v = np.array([1.01 + 0.02j, 0.98 - 0.05j])
    z = H @ to_rect(v)
    assert to_complex(z)[1] == pytest.approx(y * (v[0] - v[1]))


def test_exclusion_removes_only_that_block(case5):
    full = measurement_model(case5, range(5))
    part = measurement_model(case5, [0, 1, 3, 4])
    kept = np.vstack([full.H[full.blocks[a]] for a in [0, 1, 3, 4]])
    np.testing.assert_array_equal(part.H, kept)


def test_observability(case5):
    H = build_measurement_matrix(case5, range(5))
    assert H.shape == (34, 10)
    assert np.linalg.matrix_rank(H) == 10


def test_measurement_errors(case5):
    with pytest.raises(InvalidAgentError):
        build_measurement_matrix(case5, [9])
    with pytest.raises(CannotEstimateError):
        build_measurement_matrix(case5, [])


def test_kalman_matches_wls(case5):
    H = build_measurement_matrix(case5, range(5))
    x_true = to_rect(case5.base_voltage)
    R = 1e-9 * np.eye(len(H))
    z = H @ x_true
    ks = kalman_step(KalmanState(np.zeros(10), 1e6 * np.eye(10)), z, H, np.zeros((10, 10)), R)
    np.testing.assert_allclose(ks.x, wls_oracle(H, R, z), atol=1e-6, rtol=0)
    np.testing.assert_allclose(ks.x, x_true, atol=1e-6, rtol=0)


def test_zero_innovation_and_contraction(case5):
    H = build_measurement_matrix(case5, range(5))
    ks0 = KalmanState.flat_start(5)
    ks = kalman_step(ks0, H @ ks0.x, H, 1e-6, 1e-4 * np.eye(len(H)))
    np.testing.assert_allclose(ks.x, ks0.x, atol=1e-15)
    assert np.trace(ks.P) <= np.trace(ks0.P + 1e-6 * np.eye(10))


def test_gain_form_failure_raises():
    H = np.ones((2, 2))
    ks = KalmanState(np.zeros(2), np.zeros((2, 2)))
    with pytest.raises(NumericalFailureError):
        kalman_step(ks, np.zeros(2), H, 0.0, np.zeros((2, 2)))


def test_dimension_checks(case5):
    H = build_measurement_matrix(case5, [0])
    with pytest.raises(ValueError):
        kalman_step(KalmanState.flat_start(5), np.zeros(3), H, 1e-6, np.eye(3))
    with pytest.raises(ValueError):
        squared_error([1, 2], [1])


def test_error_metrics():
    assert squared_error([1, 2, 3], [1, 2, 3]) == 0
    assert squared_error([0.1, 0, 0], [0, 0, 0]) == pytest.approx(0.01)
    assert max_abs_error([0.1, -0.3], [0, 0]) == pytest.approx(0.3)


def test_clean_run_bounded(case5):
    r = run_se(case5, range(5), 40, KalmanState.flat_start(5), np.random.default_rng(0))
    assert np.all(np.isfinite(r.squared_error))
    assert r.max_abs_error[10:].max() < 0.02


def test_bias_lands_on_voltage_rows(case5):
    model = measurement_model(case5, range(5))
    v = case5.base_voltage
    clean = synthesize(model, v, np.random.default_rng(1), sigma=0.0)
    biased = synthesize(model, v, np.random.default_rng(1), sigma=0.0, bias={2: BIAS})
    diff = biased.z - clean.z
    np.testing.assert_allclose(diff[model.voltage_rows[2]], [BIAS, BIAS])
    assert np.count_nonzero(diff) == 2


def test_malicious_data_raises_error_and_exclusion_restores(case5):
    baseline, attacked, excluded = [], [], []
    for seed in range(20):
        v = case5.true_states(40, np.random.default_rng(seed))
        args = dict(samples=40, ks0=KalmanState.flat_start(5), v_true=v)
        baseline.append(run_se(case5, range(5), rng=np.random.default_rng(seed), **args))
        attacked.append(run_se(case5, range(5), rng=np.random.default_rng(seed),
                               malicious=[2], attack_start=20, **args))
        excluded.append(run_se(case5, [0, 1, 3, 4], rng=np.random.default_rng(seed),
                               malicious=[2], **args))
    tail = lambda rs, f: np.array([getattr(r, f)[25:].mean() for r in rs])
    assert np.all(tail(attacked, "max_abs_error") > tail(baseline, "max_abs_error"))
    # excluding the fabricated rows never hurts the steady-state squared error
    assert np.all(tail(excluded, "squared_error") < tail(attacked, "squared_error"))
    # losing one observable agent keeps the error within 2x of all-honest
    assert tail(excluded, "max_abs_error").mean() <= 2 * tail(baseline, "max_abs_error").mean()


def test_innovation_whiteness(case5):
    r = run_se(case5, range(5), 201, KalmanState.flat_start(5), np.random.default_rng(3))
    nu = np.array(r.innovations[1:])
    rho = [np.corrcoef(nu[:-1, c], nu[1:, c])[0, 1] for c in range(nu.shape[1])]
    assert abs(np.mean(rho)) < 0.2
    s = nu.sum(axis=1)
    assert abs(np.corrcoef(s[:-1], s[1:])[0, 1]) < 0.2


def test_covariance_stays_symmetric(case5):
    model = measurement_model(case5, range(5))
    rng = np.random.default_rng(4)
    ks = KalmanState.flat_start(5)
    for _ in range(1000):
        ks = kalman_step(ks, synthesize(model, case5.base_voltage, rng), model.H, 1e-6)
    assert np.array_equal(ks.P, ks.P.T)
    assert np.linalg.eigvalsh(ks.P).min() > 0


@pytest.mark.xfail(strict=True, reason=(
    "the published 0.147 depends on unpublished noise levels and case data; "
    "with sigma=0.01 pu the first-iteration squared error is ~1e-4, "
    "three orders of magnitude smaller"))
def test_first_iteration_error_same_order_as_published(case5):
    r = run_se(case5, range(5), 1, KalmanState.flat_start(5), np.random.default_rng(0))
    assert 0.0147 <= r.squared_error[0] <= 1.47
