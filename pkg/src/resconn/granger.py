"""Bivariate Granger causality used as the comparison EC estimator."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .ecmatrix import ECMatrix
from .errors import NumericalError
from .timeseries import TimeSeriesSet, check_cohort


@dataclass(frozen=True)
class VarFit:
    order: int
    coef_restricted: np.ndarray
    coef_full: np.ndarray
    rss_restricted: float
    rss_full: float
    T_effective: int

    @property
    def f_stat(self) -> float:
        p = self.order
        dof = self.T_effective - 2 * p - 1
        return max(0.0, ((self.rss_restricted - self.rss_full) / p) / (self.rss_full / dof))


def _lags(v: np.ndarray, order: int) -> np.ndarray:
    T = len(v)
    return np.column_stack([v[order - k:T - k] for k in range(1, order + 1)])


def _ols(design: np.ndarray, target: np.ndarray):
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        raise NumericalError("collinear regressors in Granger model; try a smaller order")
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    return coef, float(resid @ resid)


def fit_var_pair(x, y, order: int = 1) -> VarFit:
    """Restricted (y on its own lags) and full (plus lags of x) regressions."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if order < 1:
        raise ValueError("order must be >= 1")
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D series of equal length")
    if len(y) <= 3 * order + 2:
        raise ValueError(f"series length {len(y)} too short for order {order}")
    target = y[order:]
    ones = np.ones((len(target), 1))
    restricted = np.hstack([ones, _lags(y, order)])
    full = np.hstack([restricted, _lags(x, order)])
    coef_f, rss_f = _ols(full, target)
    coef_r, rss_r = _ols(restricted, target)
    if rss_f <= 1e-12 * max(rss_r, 1e-300):
        raise NumericalError("full Granger model fits exactly (collinear inputs); "
                             "try a smaller order")
    return VarFit(order, coef_r, coef_f, rss_r, min(rss_f, rss_r), len(target))


def gc_score(x, y, order: int = 1) -> tuple[float, float]:
    """F statistic and p-value for H1: x Granger-causes y."""
    fit = fit_var_pair(x, y, order)
    f = fit.f_stat
    p = float(stats.f.sf(f, order, fit.T_effective - 2 * order - 1))
    return f, p


def select_order(x, y, max_order: int = 5) -> int:
    """Order of the full model minimising BIC."""
    best, best_bic = 1, np.inf
    for p in range(1, max_order + 1):
        fit = fit_var_pair(x, y, p)
        n = fit.T_effective
        bic = n * np.log(fit.rss_full / n) + (2 * p + 1) * np.log(n)
        if bic < best_bic:
            best, best_bic = p, bic
    return best


def gc_matrix(ts: TimeSeriesSet, order: int | str = 1) -> ECMatrix:
    """A[x, y] = 1 - p(x -> y); zero diagonal."""
    data = ts.data
    n = data.shape[1]
    scores = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            p_ord = select_order(data[:, i], data[:, j]) if order == "bic" else int(order)
            scores[i, j] = 1.0 - gc_score(data[:, i], data[:, j], p_ord)[1]
    return ECMatrix(scores, -1, ts.subject_id, ts.group, {"method": "granger", "order": order})


def assemble_gc_ec(cohort: Sequence[TimeSeriesSet], order: int | str = 1,
                   jobs: int = 1) -> list[ECMatrix]:
    check_cohort(cohort)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(gc_matrix, cohort, [order] * len(cohort)))
    return [gc_matrix(ts, order) for ts in cohort]
