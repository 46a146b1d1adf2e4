import numpy as np
import pytest

from resconn.errors import NumericalError
from resconn.granger import assemble_gc_ec, fit_var_pair, gc_matrix, gc_score, select_order
from resconn.timeseries import TimeSeriesSet


def var_pair(seed, T=1000, b=0.5):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal((T, 2))
    x = np.zeros(T)
    y = np.zeros(T)
    for t in range(1, T):
        x[t] = 0.3 * x[t - 1] + e[t, 0]
        y[t] = 0.2 * y[t - 1] + b * x[t - 1] + e[t, 1]
    return x, y


def test_planted_coupling_detected():
    x, y = var_pair(0)
    f, p = gc_score(x, y)
    assert p < 1e-3 and f > 0
    _, p_rev = gc_score(y, x)
    assert p_rev > 1e-3


def test_independent_noise_uniform_pvalues():
    rng = np.random.default_rng(1)
    ps = [gc_score(*rng.standard_normal((2, 300)))[1] for _ in range(200)]
    assert abs(np.mean(np.array(ps) < 0.05) - 0.05) < 0.04


def test_var_fit_matches_lstsq_oracle():
    x, y = var_pair(2, T=300)
    fit = fit_var_pair(x, y, 2)
    design = np.column_stack([np.ones(298), y[1:-1], y[:-2], x[1:-1], x[:-2]])
    coef, *_ = np.linalg.lstsq(design, y[2:], rcond=None)
    assert np.allclose(fit.coef_full, coef, atol=1e-10)
    assert fit.rss_full <= fit.rss_restricted


def test_f_stat_nonnegative_and_errors():
    x, y = var_pair(3, T=200, b=0.0)
    assert fit_var_pair(x, y).f_stat >= 0
    with pytest.raises(ValueError):
        fit_var_pair(x, y, 0)
    with pytest.raises(ValueError):
        fit_var_pair(x[:5], y[:5], 2)
    with pytest.raises(NumericalError):
        fit_var_pair(np.ones(100), y[:100])


def test_select_order_finds_lag_two():
    rng = np.random.default_rng(4)
    T = 2000
    e = rng.standard_normal((T, 2))
    x, y = e[:, 0].copy(), np.zeros(T)
    for t in range(2, T):
        y[t] = 0.8 * x[t - 2] + e[t, 1]
    assert select_order(x, y, 4) == 2


def test_gc_matrix_contract():
    x, y = var_pair(5, T=400)
    z = np.random.default_rng(6).standard_normal(400)
    ts = TimeSeriesSet(np.column_stack([x, y, z]), "s1", "patient")
    ec = gc_matrix(ts)
    assert ec.scores.shape == (3, 3) and np.all(np.diag(ec.scores) == 0)
    assert ec.scores[0, 1] > 0.999
    assert ec.meta["method"] == "granger" and ec.group == "patient"
    assert np.all((ec.scores >= 0) & (ec.scores <= 1))
    both = assemble_gc_ec([ts, TimeSeriesSet(ts.data[::-1].copy(), "s2")], order=1)
    assert [e.subject_id for e in both] == ["s1", "s2"]
