import numpy as np
import pytest

from resconn.errors import NumericalError
from resconn.reservoir import (
    ReadoutWeights,
    ReservoirConfig,
    drive,
    fit_readout,
    init_reservoir,
    predict,
    with_bias,
)


def test_spectral_radius_and_input_bounds():
    for seed in range(10):
        for target in (1.0, 0.9, 1.3):
            res = init_reservoir(ReservoirConfig(spectral_radius=target), seed)
            rho = np.max(np.abs(np.linalg.eigvals(res.w_rec)))
            assert abs(rho - target) <= 1e-6
    res = init_reservoir(ReservoirConfig(input_dim=3), 0)
    assert res.w_in.shape == (50, 4)
    assert np.all(np.abs(res.w_in) <= 1)


def test_init_deterministic():
    a = init_reservoir(ReservoirConfig(), 5)
    b = init_reservoir(ReservoirConfig(), 5)
    assert np.array_equal(a.w_in, b.w_in) and np.array_equal(a.w_rec, b.w_rec)


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        ReservoirConfig(n_units=0)
    with pytest.raises(ValueError):
        ReservoirConfig(leakage=0)
    with pytest.raises(ValueError):
        ReservoirConfig(spectral_radius=0)


def test_sparsity_masks_weights():
    res = init_reservoir(ReservoirConfig(sparsity_rec=0.2), 1)
    frac = np.mean(res.w_rec != 0)
    assert 0.1 < frac < 0.3


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


def test_drive_unit_leak_matches_direct_recursion():
    res = init_reservoir(ReservoirConfig(n_units=8), 3)
    u = np.random.default_rng(0).standard_normal((40, 1))
    states = drive(res, u)
    r = np.zeros(8)
    for t in range(40):
        r = np.tanh(_logistic(res.w_in @ np.r_[u[t], 1.0]) + res.w_rec @ r)
        assert np.allclose(states[t], r, atol=1e-14)


def test_drive_two_unit_hand_oracle():
    # zero input, no bias: logistic(0) = 0.5 feeds every unit at every step
    cfg = ReservoirConfig(n_units=2, bias_scaling=0.0, leakage=0.5)
    res = init_reservoir(cfg, 0)
    w = res.w_rec
    states = drive(res, np.zeros((5, 1)))
    r1, r2 = 0.0, 0.0
    for t in range(5):
        p1 = 0.5 + w[0, 0] * r1 + w[0, 1] * r2
        p2 = 0.5 + w[1, 0] * r1 + w[1, 1] * r2
        r1, r2 = 0.5 * r1 + 0.5 * np.tanh(p1), 0.5 * r2 + 0.5 * np.tanh(p2)
        assert np.allclose(states[t], [r1, r2], atol=1e-14)


def test_drive_states_bounded_and_dimension_checked():
    res = init_reservoir(ReservoirConfig(leakage=0.3), 2)
    u = np.random.default_rng(1).standard_normal((200, 1)) * 1e3
    s = drive(res, u)
    assert np.all(np.abs(s) < 1)
    with pytest.raises(ValueError):
        drive(res, np.zeros((10, 2)))


def test_echo_state_forgetting():
    res = init_reservoir(ReservoirConfig(spectral_radius=0.9), 4)
    u = np.random.default_rng(2).standard_normal((500, 1))
    a = drive(res, u)
    b = drive(res, u, r0=np.random.default_rng(3).uniform(-1, 1, 50))
    assert np.linalg.norm(a[-1] - b[-1]) < 1e-6


def test_fit_readout_zero_targets():
    s = np.random.default_rng(0).standard_normal((100, 5))
    w = fit_readout(s, np.zeros((100, 2)), alpha=1e-3)
    assert not w.w_out.any()


def test_fit_readout_matches_lstsq_oracle():
    rng = np.random.default_rng(7)
    s = rng.standard_normal((200, 10))
    y = rng.standard_normal((200, 3))
    w = fit_readout(s, y, alpha=0.0).w_out
    oracle, *_ = np.linalg.lstsq(with_bias(s), y, rcond=None)
    assert np.max(np.abs(w - oracle.T)) <= 1e-8 * np.max(np.abs(oracle))


def test_ridge_shrinkage_monotone():
    rng = np.random.default_rng(8)
    s = rng.standard_normal((100, 6))
    y = rng.standard_normal((100, 1))
    norms = [np.linalg.norm(fit_readout(s, y, a).w_out) for a in (1e0, 1e2, 1e4)]
    assert norms[0] > norms[1] > norms[2]


def test_ridge_stationarity():
    rng = np.random.default_rng(9)
    s = rng.standard_normal((120, 8))
    y = rng.standard_normal((120, 2))
    alpha = 0.3
    w = fit_readout(s, y, alpha).w_out
    R = with_bias(s).T
    lhs = (R @ R.T + alpha * np.eye(R.shape[0])) @ w.T
    rhs = R @ y
    assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)


def test_singular_readout_advises_alpha():
    s = np.ones((50, 3))
    with pytest.raises(NumericalError, match="alpha"):
        fit_readout(s, np.arange(50.0), alpha=0.0)


def test_predict_linear_in_readout_and_zero():
    res = init_reservoir(ReservoirConfig(n_units=12), 0)
    u = np.random.default_rng(0).standard_normal((60, 1))
    w = ReadoutWeights(np.random.default_rng(1).standard_normal((2, 13)))
    assert np.allclose(predict(res, ReadoutWeights(2 * w.w_out), u), 2 * predict(res, w, u))
    assert not predict(res, ReadoutWeights(np.zeros((1, 13))), u).any()
    with pytest.raises(ValueError):
        predict(res, ReadoutWeights(np.zeros((1, 5))), u)


def test_exact_fit_of_linear_state_target():
    res = init_reservoir(ReservoirConfig(n_units=20), 5)
    u = np.random.default_rng(5).standard_normal((300, 1))
    states = drive(res, u)
    target = states @ np.random.default_rng(6).standard_normal(20) + 0.3
    w = fit_readout(states, target, alpha=0.0)
    pred = predict(res, w, u)[:, 0]
    assert np.corrcoef(pred, target)[0, 1] >= 0.99
