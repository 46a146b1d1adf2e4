"""Reservoir-computing causality.

For a pair of channels (x, y) a stack of reservoirs is driven by x and a
ridge readout is trained to map the state at time t onto y(t + tau); the
Pearson correlation on a held-out suffix is the prediction skill
rho_{x->y}(tau).  The same is done with the roles swapped.  Shuffled copies
of the target give null distributions for rho and for

    Delta_{x->y}(tau) = rho_{x->y}(tau) - rho_{y->x}(tau),

and the resulting empirical p-values are folded into delta-scores in [0, 1].
"""

from __future__ import annotations

import csv
import hashlib
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .ecmatrix import ECMatrix
from .errors import CompletenessError, IndeterminateError, NumericalError
from .reservoir import ReservoirConfig, drive_stack, init_reservoir
from .timeseries import STD_FLOOR, TimeSeriesSet, shuffle_surrogate, split_index

logger = logging.getLogger(__name__)

DEFAULT_TAUS = (-5, -4, -3, -2, -1, 1, 2, 3, 4, 5)
EXPORT_TAUS = (-1, -2)
SURROGATE_SEED_OFFSET = 100_000


@dataclass(frozen=True)
class RCCSettings:
    taus: tuple = DEFAULT_TAUS
    n_reservoirs: int = 20
    n_surrogates: int = 100
    alpha: float = 1e-6
    train_fraction: float = 0.8
    washout: int = 10
    standardize: bool = True
    mode: str = "unidirectional"
    peak_mode: str = "argmax"
    reservoir: ReservoirConfig = field(default_factory=ReservoirConfig)


@dataclass(frozen=True)
class SkillCurve:
    taus: np.ndarray
    rho_xy: np.ndarray
    rho_yx: np.ndarray
    sem_xy: np.ndarray
    sem_yx: np.ndarray
    # mean skill over surrogate targets, when surrogates were run
    null_xy: np.ndarray | None = None
    null_yx: np.ndarray | None = None

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=int)
        if taus.size == 0:
            raise ValueError("empty skill curve")
        if np.any(np.diff(taus) <= 0):
            raise ValueError("taus must be strictly increasing")
        object.__setattr__(self, "taus", taus)

    def swapped(self) -> "SkillCurve":
        return SkillCurve(self.taus, self.rho_yx, self.rho_xy, self.sem_yx, self.sem_xy,
                          self.null_yx, self.null_xy)


@dataclass(frozen=True)
class DeltaScores:
    tau: int
    p_rho_xy: float = 1.0
    p_rho_yx: float = 1.0
    p_delta_xy: float = 1.0  # H1: Delta_{x->y} > 0
    p_delta_yx: float = 1.0  # H1: Delta_{y->x} > 0
    p_delta: float = 1.0  # H1: Delta != 0
    delta_xy: float = 0.0
    delta_yx: float = 0.0
    delta_bi: float = 0.0
    rho_xy: float = float("nan")
    rho_yx: float = float("nan")
    degenerate: bool = False

    def swapped(self) -> "DeltaScores":
        return DeltaScores(self.tau, self.p_rho_yx, self.p_rho_xy, self.p_delta_yx,
                           self.p_delta_xy, self.p_delta, self.delta_yx, self.delta_xy,
                           self.delta_bi, self.rho_yx, self.rho_xy, self.degenerate)


class Direction(str, Enum):
    x_causes_y = "x_causes_y"
    y_causes_x = "y_causes_x"


def pair_seed(root_seed: int, subject_id: str, x: int, y: int) -> int:
    """Per-pair seed, independent of processing order."""
    digest = hashlib.sha256(f"{root_seed}|{subject_id}|{x}|{y}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def _zscore(v: np.ndarray) -> np.ndarray:
    return (v - v.mean()) / max(v.std(), STD_FLOOR)


def _pearson_columns(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Correlation along axis 0 between matching trailing slices of a and b."""
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    num = (ac * bc).sum(axis=0)
    den = np.sqrt((ac * ac).sum(axis=0) * (bc * bc).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = num / den
    return np.where(den > 0, np.clip(r, -1.0, 1.0), 0.0)


def _reservoir_stack(config: ReservoirConfig, seed: int, n: int):
    res = [init_reservoir(config, seed + k) for k in range(n)]
    return np.stack([r.w_in for r in res]), np.stack([r.w_rec for r in res])


def _lag_window(T: int, tau: int):
    return max(0, -tau), T - max(0, tau)


def _direction_skill(states, target, surrogate_index, taus, settings: RCCSettings):
    """Skill of the reservoir states at predicting target(t + tau).

    Returns (real, null): real has shape (n_taus, K); null has shape
    (n_taus, K, n_surrogates).
    """
    T, K, n_units = states.shape
    # (K, T, P) so that batched matmul runs per reservoir
    design_all = np.concatenate([states, np.ones((T, K, 1))], axis=2).transpose(1, 0, 2)
    targets_all = target[:, None] if surrogate_index is None else \
        np.concatenate([target[:, None], target[surrogate_index].T], axis=1)
    eye = np.eye(n_units + 1) * settings.alpha
    real = np.empty((len(taus), K))
    null = np.empty((len(taus), K, targets_all.shape[1] - 1))
    for i, tau in enumerate(taus):
        lo, hi = _lag_window(T, tau)
        n_train = split_index(hi - lo, settings.train_fraction)
        start = min(max(lo, settings.washout), lo + n_train - 2)
        design = design_all[:, start:lo + n_train]
        design_t = design.transpose(0, 2, 1)
        y_train = targets_all[start + tau:lo + n_train + tau]
        gram = design_t @ design + eye
        rhs = design_t @ y_train
        try:
            w = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            raise NumericalError("singular readout system; use alpha > 0") from None
        pred = design_all[:, lo + n_train:hi] @ w  # (K, T_test, M)
        truth = targets_all[lo + n_train + tau:hi + tau]
        rho = _pearson_columns(pred.transpose(1, 0, 2), truth[:, None, :])  # (K, M)
        real[i] = rho[:, 0]
        null[i] = rho[:, 1:]
    return real, null


def _check_pair(x, y, taus):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D series of equal length")
    max_lag = max(abs(int(t)) for t in taus)
    if max_lag >= len(x) / 4:
        raise ValueError(f"series of length {len(x)} too short for lag {max_lag}")
    return x, y


def _pair_statistics(x, y, taus, settings: RCCSettings, seed: int, n_surrogates: int):
    x, y = _check_pair(x, y, taus)
    if settings.standardize:
        x, y = _zscore(x), _zscore(y)
    config = replace(settings.reservoir, input_dim=1)
    w_in, w_rec = _reservoir_stack(config, seed, settings.n_reservoirs)
    T = len(x)
    perms = None
    if n_surrogates:
        # shuffle_surrogate on an index vector gives the same draw as on the values
        perms = np.stack([shuffle_surrogate(np.arange(T), seed + SURROGATE_SEED_OFFSET + j)
                          for j in range(n_surrogates)])
    sx = drive_stack(w_in, w_rec, x[:, None], config.leakage)
    sy = drive_stack(w_in, w_rec, y[:, None], config.leakage)
    real_xy, null_xy = _direction_skill(sx, y, perms, taus, settings)
    real_yx, null_yx = _direction_skill(sy, x, perms, taus, settings)
    return real_xy, null_xy, real_yx, null_yx


def prediction_skill(x, y, taus=DEFAULT_TAUS, config: ReservoirConfig | None = None,
                     n_reservoirs: int = 20, alpha: float = 1e-6, seed: int = 0,
                     n_surrogates: int = 0, settings: RCCSettings | None = None) -> SkillCurve:
    """Mean held-out skill (and its standard error over reservoirs) per lag,
    in both directions."""
    settings = settings or RCCSettings()
    settings = replace(settings, n_reservoirs=n_reservoirs, alpha=alpha,
                       reservoir=config or settings.reservoir)
    taus = tuple(int(t) for t in taus)
    real_xy, null_xy, real_yx, null_yx = _pair_statistics(x, y, taus, settings, seed,
                                                          n_surrogates)
    k = real_xy.shape[1]
    sem = (lambda a: a.std(axis=1, ddof=1) / np.sqrt(k)) if k > 1 else \
        (lambda a: np.zeros(a.shape[0]))
    nulls = (null_xy.mean(axis=(1, 2)), null_yx.mean(axis=(1, 2))) if n_surrogates else (None, None)
    return SkillCurve(np.array(taus), real_xy.mean(axis=1), real_yx.mean(axis=1),
                      sem(real_xy), sem(real_yx), *nulls)


def delta_curve(curve: SkillCurve) -> np.ndarray:
    return curve.rho_xy - curve.rho_yx


def _peak(taus: np.ndarray, values: np.ndarray, mode: str) -> int:
    v = values if mode == "argmax" else -values
    best = np.max(v)
    candidates = [int(t) for t, val in zip(taus, v) if val == best]
    return min(candidates, key=lambda t: (abs(t), t > 0))


def peak_lags(curve: SkillCurve, mode: str = "argmax") -> tuple[int, int]:
    """Lag of the extreme skill per direction.

    ``mode="argmax"`` follows the peak-value reading; ``"argmin"`` is the
    literal alternative.  Ties go to the smallest |tau|, then to negative lags.
    """
    if mode not in ("argmax", "argmin"):
        raise ValueError(f"unknown peak mode {mode!r}")
    return _peak(curve.taus, curve.rho_xy, mode), _peak(curve.taus, curve.rho_yx, mode)


def empirical_pvalue(observed: float, null: np.ndarray) -> float:
    """One-sided p for H1: statistic > null, with the add-one correction."""
    null = np.asarray(null)
    return float((1 + np.count_nonzero(null >= observed)) / (1 + null.size))


def delta_scores(pvals: DeltaScores, tau: int | None = None) -> DeltaScores:
    """Fill the delta fields from the p-value fields.

    For tau > 0 the x->y evidence is (1 - p_rho_xy)(1 - p_delta_xy); for
    tau < 0 it is (1 - p_rho_yx)(1 - p_delta_yx).  The bidirectional score
    is (1 - p_rho_xy)(1 - p_rho_yx) p_delta.
    """
    tau = pvals.tau if tau is None else int(tau)
    if tau == 0:
        raise ValueError("delta-scores are undefined at tau = 0")
    for name in ("p_rho_xy", "p_rho_yx", "p_delta_xy", "p_delta_yx", "p_delta"):
        p = getattr(pvals, name)
        if not 0 <= p <= 1:
            raise ValueError(f"{name}={p} outside [0, 1]")
    fwd = (1 - pvals.p_rho_xy) * (1 - pvals.p_delta_xy)
    bwd = (1 - pvals.p_rho_yx) * (1 - pvals.p_delta_yx)
    d_xy, d_yx = (fwd, bwd) if tau > 0 else (bwd, fwd)
    d_bi = (1 - pvals.p_rho_xy) * (1 - pvals.p_rho_yx) * pvals.p_delta
    clamp = lambda v: float(min(1.0, max(0.0, v)))
    return replace(pvals, tau=tau, delta_xy=clamp(d_xy), delta_yx=clamp(d_yx),
                   delta_bi=clamp(d_bi))


def _pvalues_from_stats(tau, real_xy, null_xy, real_yx, null_yx) -> DeltaScores:
    obs_xy, obs_yx = real_xy.mean(), real_yx.mean()
    nxy, nyx = null_xy.mean(axis=0), null_yx.mean(axis=0)
    obs_d = obs_xy - obs_yx
    null_d = nxy - nyx
    return DeltaScores(
        tau=int(tau),
        p_rho_xy=empirical_pvalue(obs_xy, nxy),
        p_rho_yx=empirical_pvalue(obs_yx, nyx),
        p_delta_xy=empirical_pvalue(obs_d, null_d),
        p_delta_yx=empirical_pvalue(-obs_d, -null_d),
        p_delta=empirical_pvalue(abs(obs_d), np.abs(null_d)),
        rho_xy=float(obs_xy), rho_yx=float(obs_yx),
    )


def _degenerate(x, y) -> bool:
    return np.ptp(np.asarray(x, dtype=float)) == 0 or np.ptp(np.asarray(y, dtype=float)) == 0


def pair_scores(x, y, taus=EXPORT_TAUS, settings: RCCSettings | None = None,
                seed: int = 0) -> dict[int, DeltaScores]:
    """Surrogate p-values and delta-scores for every lag in ``taus``."""
    settings = settings or RCCSettings()
    taus = tuple(int(t) for t in taus)
    if 0 in taus:
        raise ValueError("tau = 0 is excluded from delta-scoring")
    if settings.n_surrogates < 20:
        raise ValueError("need at least 20 surrogates")
    if _degenerate(x, y):
        warnings.warn("constant series in pair; p-values forced to 1", RuntimeWarning)
        return {t: DeltaScores(t, degenerate=True) for t in taus}
    stats_ = _pair_statistics(x, y, taus, settings, seed, settings.n_surrogates)
    out = {}
    for i, tau in enumerate(taus):
        p = _pvalues_from_stats(tau, *(s[i] for s in stats_))
        out[tau] = delta_scores(p)
    return out


def surrogate_pvalues(x, y, tau: int, config: ReservoirConfig | None = None,
                      n_reservoirs: int = 20, n_surrogates: int = 100, seed: int = 0,
                      alpha: float = 1e-6, settings: RCCSettings | None = None) -> DeltaScores:
    settings = settings or RCCSettings()
    settings = replace(settings, n_reservoirs=n_reservoirs, n_surrogates=n_surrogates,
                       alpha=alpha, reservoir=config or settings.reservoir)
    if n_surrogates < 20:
        raise ValueError("need at least 20 surrogates")
    if _degenerate(x, y):
        warnings.warn("constant series in pair; p-values forced to 1", RuntimeWarning)
        return DeltaScores(int(tau), degenerate=True)
    taus = (int(tau),)
    stats_ = _pair_statistics(x, y, taus, settings, seed, n_surrogates)
    return _pvalues_from_stats(tau, *(s[0] for s in stats_))


def best_lag(scores: Mapping[int, DeltaScores]) -> int:
    """Lag carrying the strongest directed evidence.

    Maximises max(delta_xy, delta_yx); since delta-scores saturate at the
    surrogate resolution, ties go to the larger |rho_xy - rho_yx|, then to
    the smallest |tau| and negative lags.
    """
    if not scores:
        raise ValueError("no lags to choose from")

    def key(tau):
        d = scores[tau]
        gap = abs(d.rho_xy - d.rho_yx)
        gap = gap if np.isfinite(gap) else 0.0
        return (-max(d.delta_xy, d.delta_yx), -gap, abs(tau), tau > 0)

    return min(scores, key=key)


def interpret_direction(delta: float, tau: int) -> Direction:
    """Causal direction implied by the sign of Delta_{x->y}(tau) and of tau."""
    if tau == 0 or delta == 0:
        raise IndeterminateError("direction is indeterminate for tau = 0 or Delta = 0")
    return Direction.x_causes_y if (delta > 0) == (tau > 0) else Direction.y_causes_x


def assemble_ec(pair_results: Mapping[tuple, DeltaScores], n_nodes: int, tau: int,
                mode: str = "unidirectional", subject_id: str = "", group: str = "",
                meta: dict | None = None) -> ECMatrix:
    """A[x, y] = delta_{x->y}(tau), plus delta_{x<->y} in bidirectional mode.

    ``pair_results`` maps ordered (x, y) with x < y to scores of that pair;
    the (y, x) entry is taken from the same record.
    """
    if mode not in ("unidirectional", "bidirectional"):
        raise ValueError(f"unknown EC mode {mode!r}")
    scores = np.zeros((n_nodes, n_nodes))
    missing = []
    for x, y in combinations(range(n_nodes), 2):
        d = pair_results.get((x, y))
        if d is None and (y, x) in pair_results:
            d = pair_results[(y, x)].swapped()
        if d is None:
            missing.append((x, y))
            continue
        bi = d.delta_bi if mode == "bidirectional" else 0.0
        scores[x, y] = d.delta_xy + bi
        scores[y, x] = d.delta_yx + bi
    if missing:
        raise CompletenessError(f"missing pair scores for {missing}")
    return ECMatrix(scores, int(tau), subject_id, group, dict(meta or {}))


def _pair_task(args):
    x, y, taus, settings, seed = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return pair_scores(x, y, taus, settings, seed)


def estimate_ec(ts: TimeSeriesSet, taus=EXPORT_TAUS, settings: RCCSettings | None = None,
                root_seed: int = 0, jobs: int = 1) -> dict[int, ECMatrix]:
    """EC matrices of one subject at each requested lag."""
    settings = settings or RCCSettings()
    taus = tuple(int(t) for t in taus)
    n = ts.n_channels
    pairs = list(combinations(range(n), 2))
    tasks = [(ts.data[:, i], ts.data[:, j], taus, settings,
              pair_seed(root_seed, ts.subject_id, i, j)) for i, j in pairs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_pair_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_pair_task(t) for t in tasks]
    meta = {"method": "rcc", "n_reservoirs": settings.n_reservoirs,
            "n_surrogates": settings.n_surrogates, "seed": root_seed}
    out = {}
    for tau in taus:
        by_pair = {pair: res[tau] for pair, res in zip(pairs, results)}
        out[tau] = assemble_ec(by_pair, n, tau, settings.mode, ts.subject_id, ts.group, meta)
    return out


def write_skill_curve(curve: SkillCurve, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["tau", "rho_xy", "rho_yx", "sem_xy", "sem_yx"]
    if curve.null_xy is not None:
        cols += ["null_xy", "null_yx"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i, tau in enumerate(curve.taus):
            row = [int(tau), curve.rho_xy[i], curve.rho_yx[i], curve.sem_xy[i], curve.sem_yx[i]]
            if curve.null_xy is not None:
                row += [curve.null_xy[i], curve.null_yx[i]]
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    return path


def read_skill_curve(path) -> SkillCurve:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    col = lambda k: np.array([float(r[k]) for r in rows])
    nulls = (col("null_xy"), col("null_yx")) if rows and "null_xy" in rows[0] else (None, None)
    return SkillCurve(col("tau").astype(int), col("rho_xy"), col("rho_yx"), col("sem_xy"),
                      col("sem_yx"), *nulls)


BLOCKS = ("LL", "RR", "LR", "RL")


def hemispheric_summary(ec: ECMatrix | np.ndarray, hemisphere_of) -> dict[str, float]:
    """Mean off-diagonal weight of each directed hemispheric block.

    ``LR`` averages edges whose source is in the left hemisphere and target in
    the right one.  ``hemisphere_of`` is a sequence or mapping node -> 'L'/'R'.
    """
    scores = ec.scores if isinstance(ec, ECMatrix) else np.asarray(ec, dtype=float)
    n = scores.shape[0]
    try:
        hemi = np.array([str(hemisphere_of[i]).upper() for i in range(n)])
    except (KeyError, IndexError):
        raise ValueError("every node must be mapped to a hemisphere") from None
    if not np.all(np.isin(hemi, ("L", "R"))):
        raise ValueError("hemisphere labels must be 'L' or 'R'")
    off = ~np.eye(n, dtype=bool)
    out = {}
    for block in BLOCKS:
        mask = np.outer(hemi == block[0], hemi == block[1]) & off
        out[block] = float(scores[mask].mean()) if mask.any() else float("nan")
    return out


def group_ttest(a, b) -> tuple[float, float]:
    """Welch two-sample t-test, two-sided."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least 2 samples")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0 and vb == 0:
        raise IndeterminateError("both groups have zero variance")
    res = stats.ttest_ind(a, b, equal_var=False)
    return float(res.statistic), float(res.pvalue)
