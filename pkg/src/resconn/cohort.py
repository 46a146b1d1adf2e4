"""Synthetic two-group cohorts of coupled logistic-map networks."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DynamicsError
from .explain import Atlas, write_atlas
from .timeseries import (ManifestEntry, TimeSeriesSet, save_timeseries,
                         simulate_logistic_network, write_manifest)

NETWORKS = ("Visual", "SomatoMotor", "DorsalAttention", "VentralAttention", "Limbic",
            "FrontoParietal", "Default")


def parse_edges(spec: str | None) -> tuple[tuple[int, int], ...]:
    """'0>1, 2>3' -> ((0, 1), (2, 3))."""
    if not spec or not spec.strip():
        return ()
    edges = []
    for tok in spec.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            a, b = tok.split(">")
            edges.append((int(a), int(b)))
        except ValueError:
            raise ValueError(f"bad edge {tok!r}; expected 'source>target'") from None
    return tuple(edges)


def format_edges(edges) -> str:
    return ",".join(f"{a}>{b}" for a, b in edges)


@dataclass(frozen=True)
class CohortSpec:
    n_control: int = 30
    n_patient: int = 30
    n_rois: int = 10
    T: int = 1000
    coupling: float = 0.1
    rate_low: float = 3.7
    rate_high: float = 3.9
    planted: tuple = ((0, 1), (0, 2), (0, 3))  # present in patients only
    shared: tuple = ()  # present in both groups
    transient: int = 100

    def coupling_matrix(self, group: str) -> np.ndarray:
        c = np.zeros((self.n_rois, self.n_rois))
        edges = list(self.shared) + (list(self.planted) if group == "patient" else [])
        for a, b in edges:
            if a == b or not (0 <= a < self.n_rois and 0 <= b < self.n_rois):
                raise ValueError(f"invalid coupling {a}>{b} for {self.n_rois} ROIs")
            c[a, b] = self.coupling
        return c


def default_atlas(n_rois: int) -> Atlas:
    half = (n_rois + 1) // 2
    hemis = tuple("L" if i < half else "R" for i in range(n_rois))
    names = tuple(f"{h}_roi{i:03d}" for i, h in enumerate(hemis))
    nets = tuple(NETWORKS[(i if i < half else i - half) % len(NETWORKS)] for i in range(n_rois))
    return Atlas(names, hemis, nets)


def aperiodic(data: np.ndarray, min_distinct: float = 0.95) -> bool:
    """True when every channel visits at least ``min_distinct * T`` distinct values.

    Logistic rates in [3.7, 3.9] include periodic windows (period 3 near 3.83,
    among others); a channel caught in one repeats a handful of values.
    """
    data = np.asarray(data)
    need = min_distinct * data.shape[0]
    return all(len(np.unique(np.round(col, 9))) >= need for col in data.T)


def simulate_subject(spec: CohortSpec, group: str, seed: int, subject_id: str,
                     channel_names=(), max_draws: int = 200) -> TimeSeriesSet:
    """One subject; rates and initial state are redrawn until every channel is
    aperiodic over the recorded window."""
    rng = np.random.default_rng(seed)
    coupling = spec.coupling_matrix(group)
    for _ in range(max_draws):
        rates = rng.uniform(spec.rate_low, spec.rate_high, spec.n_rois)
        x0 = rng.uniform(0.2, 0.8, spec.n_rois)
        data = simulate_logistic_network(coupling, rates, spec.T, None, x0, spec.transient)
        if aperiodic(data):
            return TimeSeriesSet(data, subject_id, group, 1.0, tuple(channel_names))
    raise DynamicsError(f"subject {subject_id}: no aperiodic draw in {max_draws} attempts; "
                        "widen the rate range")


def simulate_cohort(spec: CohortSpec, seed: int = 0) -> list[tuple[TimeSeriesSet, str]]:
    """Subjects with their lesion side; subject k uses seed ``seed + k``."""
    atlas = default_atlas(spec.n_rois)
    out = []
    k = 0
    for group, count in (("control", spec.n_control), ("patient", spec.n_patient)):
        for i in range(count):
            sid = f"{'ctl' if group == 'control' else 'pat'}{i:03d}"
            ts = simulate_subject(spec, group, seed + k, sid, atlas.names)
            side = "none" if group == "control" else ("left" if i % 2 == 0 else "right")
            out.append((ts, side))
            k += 1
    return out


def write_cohort(spec: CohortSpec, out_dir, seed: int = 0) -> Path:
    """Write per-subject CSVs, ``manifest.csv`` and ``atlas.csv``; returns the manifest."""
    out_dir = Path(out_dir)
    (out_dir / "subjects").mkdir(parents=True, exist_ok=True)
    entries = []
    for ts, side in simulate_cohort(spec, seed):
        path = save_timeseries(ts, out_dir / "subjects" / f"{ts.subject_id}.csv")
        entries.append(ManifestEntry(ts.subject_id, path, ts.group, side))
    write_atlas(default_atlas(spec.n_rois), out_dir / "atlas.csv")
    return write_manifest(entries, out_dir / "manifest.csv")
