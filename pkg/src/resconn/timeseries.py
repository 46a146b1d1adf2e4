"""Multivariate time series: loading, synthetic generators, splitting,
surrogates and control-group standardization of EC samples."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .ecmatrix import ECMatrix
from .errors import DataError, DynamicsError, FormatError, ParseError

GROUPS = ("control", "patient")
LESION_SIDES = ("left", "right", "none")
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class TimeSeriesSet:
    """One subject's recording: ``data`` is T samples x N channels."""

    data: np.ndarray
    subject_id: str = ""
    group: str = "control"
    sampling_period: float = 1.0
    channel_names: tuple = field(default=())

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError(f"time series must be 2-D (T x N), got ndim={data.ndim}")
        if data.shape[0] < 2 or data.shape[1] < 2:
            raise ValueError(f"need T >= 2 and N >= 2, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("time series contains non-finite values")
        if self.group not in GROUPS:
            raise ValueError(f"group must be one of {GROUPS}, got {self.group!r}")
        names = tuple(self.channel_names) or tuple(f"ch{i}" for i in range(data.shape[1]))
        if len(names) != data.shape[1]:
            raise ValueError("channel_names length does not match channel count")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channel_names", names)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]


def load_timeseries(path, group: str = "control", subject_id: str | None = None,
                    sampling_period: float = 1.0) -> TimeSeriesSet:
    """Read a comma-separated table with one header row of channel names."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    values = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise FormatError(f"{path}: row {i} has {len(row)} fields, header has {len(header)}")
        parsed = []
        for j, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{path}: non-numeric cell {cell!r} at row {i}, col {j}",
                                 row=i, col=j) from None
            if not math.isfinite(v):
                raise ParseError(f"{path}: non-finite cell {cell!r} at row {i}, col {j}",
                                 row=i, col=j)
            parsed.append(v)
        values.append(parsed)
    if len(values) < 2 or len(header) < 2:
        raise FormatError(f"{path}: need at least 2 samples and 2 channels")
    return TimeSeriesSet(np.array(values), subject_id if subject_id is not None else path.stem,
                         group, sampling_period, tuple(header))


def save_timeseries(ts: TimeSeriesSet, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(ts.channel_names)]
    # repr() round-trips doubles exactly
    lines += [",".join(repr(float(v)) for v in row) for row in ts.data]
    path.write_text("\n".join(lines) + "\n")
    return path


@dataclass(frozen=True)
class CoupledLogisticParams:
    r_x: float = 3.8
    r_y: float = 3.8
    beta_xy: float = 0.0
    beta_yx: float = 0.1
    x0: float = 0.4
    y0: float = 0.2
    transient: int = 100

    def __post_init__(self):
        for name in ("r_x", "r_y"):
            r = getattr(self, name)
            if not 3.6 <= r <= 4.0:
                raise ValueError(f"{name}={r} outside the chaotic range [3.6, 4.0]")
        if self.beta_xy < 0 or self.beta_yx < 0:
            raise ValueError("coupling strengths must be non-negative")
        if not (0 < self.x0 < 1 and 0 < self.y0 < 1):
            raise ValueError("initial conditions must lie in (0, 1)")
        if self.transient < 0:
            raise ValueError("transient must be >= 0")


def perturbed_initial(x0: Sequence[float], seed: int | None) -> np.ndarray:
    """Initial state used by the logistic generators for a given seed.

    The seed moves each coordinate by at most 0.05 and keeps it inside (0, 1).
    """
    x0 = np.asarray(x0, dtype=float)
    if seed is None:
        return x0.copy()
    rng = np.random.default_rng(seed)
    return np.clip(x0 + rng.uniform(-0.05, 0.05, size=x0.shape), 1e-3, 1 - 1e-3)


def simulate_logistic_network(coupling, rates, T: int, seed: int | None = 0,
                              x0=None, transient: int = 100) -> np.ndarray:
    """Iterate N logistic maps coupled through ``coupling[source, target]``.

        x_i(t+1) = x_i(t) * (r_i - r_i x_i(t) - sum_j coupling[j, i] x_j(t))

    Returns a (T, N) array after discarding ``transient`` samples.
    """
    coupling = np.asarray(coupling, dtype=float)
    n = coupling.shape[0]
    rates = np.broadcast_to(np.asarray(rates, dtype=float), (n,))
    if x0 is None:
        x0 = np.linspace(0.2, 0.6, n)
    state = perturbed_initial(x0, seed)
    if T < 1:
        raise ValueError("T must be positive")
    drive_in = coupling.T.copy()
    out = np.empty((T, n))
    for step in range(T + transient):
        state = state * (rates - rates * state - drive_in @ state)
        if not np.all((state > 0) & (state < 1)):
            raise DynamicsError(f"logistic trajectory left (0, 1) at step {step}", step=step)
        if step >= transient:
            out[step - transient] = state
    return out


def simulate_coupled_logistic(params: CoupledLogisticParams, T: int, seed: int | None = 0,
                              subject_id: str = "logistic", group: str = "control") -> TimeSeriesSet:
    """Two-species chaotic logistic system; ``beta_yx`` is the x -> y coupling."""
    if T <= params.transient and params.transient > 0:
        raise ValueError(f"T={T} must exceed the transient ({params.transient})")
    coupling = np.array([[0.0, params.beta_yx], [params.beta_xy, 0.0]])
    data = simulate_logistic_network(coupling, [params.r_x, params.r_y], T, seed,
                                     x0=[params.x0, params.y0], transient=params.transient)
    return TimeSeriesSet(data, subject_id, group, 1.0, ("x", "y"))


def shuffle_surrogate(series, seed) -> np.ndarray:
    """Uniformly random permutation of the values of a 1-D series."""
    series = np.asarray(series)
    if series.ndim != 1 or series.size < 2:
        raise ValueError("surrogate input must be a 1-D series of length >= 2")
    return np.random.default_rng(seed).permutation(series)


def split_index(n: int, train_fraction: float) -> int:
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n_train = int(math.floor(n * train_fraction + 1e-9))
    if n_train < 2 or n - n_train < 2:
        raise ValueError(f"train_fraction={train_fraction} on {n} samples leaves a segment "
                         f"shorter than 2 (train={n_train}, test={n - n_train})")
    return n_train


def train_test_split(series: TimeSeriesSet, train_fraction: float = 0.8):
    """Contiguous prefix/suffix split; temporal order is never changed."""
    k = split_index(series.n_samples, train_fraction)
    return replace(series, data=series.data[:k]), replace(series, data=series.data[k:])


def standardize_channels(series: TimeSeriesSet) -> TimeSeriesSet:
    data = series.data
    std = data.std(axis=0)
    return replace(series, data=(data - data.mean(axis=0)) / np.maximum(std, STD_FLOOR))


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray
    floor: float = STD_FLOOR

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        std = np.maximum(np.asarray(self.std, dtype=float), self.floor)
        if mean.shape != std.shape:
            raise ValueError("mean and std shapes differ")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


def control_stats(samples: Sequence[ECMatrix], floor: float = STD_FLOOR) -> StandardizationStats:
    """Per-edge mean and (population) standard deviation over control samples."""
    if not samples:
        raise DataError("no control samples to standardize against")
    stack = np.stack([s.scores for s in samples])
    return StandardizationStats(stack.mean(axis=0), stack.std(axis=0), floor)


def _check_shape(ec: ECMatrix, stats: StandardizationStats):
    if ec.scores.shape != stats.mean.shape:
        raise ValueError(f"EC shape {ec.scores.shape} does not match stats {stats.mean.shape}")


def zscore_edges(samples: Sequence[ECMatrix], stats: StandardizationStats) -> list[ECMatrix]:
    out = []
    for ec in samples:
        _check_shape(ec, stats)
        z = (ec.scores - stats.mean) / stats.std
        np.fill_diagonal(z, 0.0)
        out.append(ec.with_scores(z))
    return out


def unzscore_edges(samples: Sequence[ECMatrix], stats: StandardizationStats) -> list[ECMatrix]:
    out = []
    for ec in samples:
        _check_shape(ec, stats)
        v = ec.scores * stats.std + stats.mean
        np.fill_diagonal(v, 0.0)
        out.append(ec.with_scores(v))
    return out


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    path: Path
    group: str
    lesion_side: str = "none"


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"subject_id", "path", "group"} - set(reader.fieldnames or ())
        if missing:
            raise FormatError(f"{path}: manifest lacks columns {sorted(missing)}")
        entries = []
        for i, row in enumerate(reader, start=2):
            side = (row.get("lesion_side") or "none").strip()
            group = row["group"].strip()
            if group not in GROUPS:
                raise FormatError(f"{path}: row {i}: unknown group {group!r}")
            if side not in LESION_SIDES:
                raise FormatError(f"{path}: row {i}: unknown lesion_side {side!r}")
            p = Path(row["path"].strip())
            if not p.is_absolute():
                p = path.parent / p
            entries.append(ManifestEntry(row["subject_id"].strip(), p, group, side))
    if len({e.subject_id for e in entries}) != len(entries):
        raise FormatError(f"{path}: duplicate subject_id")
    return entries


def write_manifest(entries: Sequence[ManifestEntry], path, relative_to=None) -> Path:
    path = Path(path)
    base = Path(relative_to) if relative_to else path.parent
    lines = ["subject_id,path,group,lesion_side"]
    for e in entries:
        p = Path(e.path)
        try:
            p = p.relative_to(base)
        except ValueError:
            pass
        lines.append(f"{e.subject_id},{p.as_posix()},{e.group},{e.lesion_side}")
    path.write_text("\n".join(lines) + "\n")
    return path


def load_cohort(manifest_path, sampling_period: float = 1.0) -> list[TimeSeriesSet]:
    cohort = []
    for e in read_manifest(manifest_path):
        cohort.append(load_timeseries(e.path, e.group, e.subject_id, sampling_period))
    check_cohort(cohort)
    return cohort


def check_cohort(cohort: Sequence[TimeSeriesSet]):
    if not cohort:
        raise DataError("empty cohort")
    n = cohort[0].n_channels
    names = cohort[0].channel_names
    for ts in cohort[1:]:
        if ts.n_channels != n or ts.channel_names != names:
            raise DataError(f"subject {ts.subject_id} channel layout differs from "
                            f"{cohort[0].subject_id}")
