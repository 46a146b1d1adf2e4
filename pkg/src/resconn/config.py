"""Pipeline configuration: a sectioned INI file with a typed, versioned schema.

Every key is parsed to a canonical value (defaults filled in), so digests are
stable under key reordering, whitespace and number formatting, and change
whenever a value that affects results changes.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError

SCHEMA_VERSION = 1


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple:
    return tuple(int(t) for t in s.replace(",", " ").split())


def _edges(s: str) -> tuple:
    from .cohort import parse_edges
    return parse_edges(s)


def _choice(*options) -> Callable[[str], str]:
    def parse(s: str) -> str:
        v = s.strip().lower()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return parse


def _order(s: str):
    v = s.strip().lower()
    return "bic" if v == "bic" else int(v)


def _opt_float(s: str):
    v = s.strip().lower()
    return None if v in ("", "auto", "none") else float(v)


# section -> key -> (parser, default); None default means required
SCHEMA: dict[str, dict[str, tuple[Callable, Any]]] = {
    "paths": {
        "manifest": (str, None),
        "atlas": (str, ""),
        "output_dir": (str, None),
    },
    "run": {
        "seed": (int, None),
        "method": (_choice("rcc", "granger"), "rcc"),
        "jobs": (int, 1),
    },
    "simulate": {
        "n_control": (int, 30),
        "n_patient": (int, 30),
        "n_rois": (int, 10),
        "T": (int, 1000),
        "coupling": (float, 0.1),
        "rate_low": (float, 3.7),
        "rate_high": (float, 3.9),
        "planted": (_edges, "0>1,0>2,0>3"),
        "shared": (_edges, ""),
        "transient": (int, 100),
    },
    "reservoir": {
        "n_units": (int, 50),
        "sparsity_in": (float, 1.0),
        "sparsity_rec": (float, 1.0),
        "input_scaling": (float, 1.0),
        "input_shift": (float, 0.0),
        "bias_scaling": (float, 1.0),
        "bias_shift": (float, 0.0),
        "spectral_radius": (float, 1.0),
        "leakage": (float, 1.0),
    },
    "rcc": {
        "taus": (_ints, "-1 -2"),
        "n_reservoirs": (int, 20),
        "n_surrogates": (int, 100),
        "alpha": (float, 1e-6),
        "train_fraction": (float, 0.8),
        "washout": (int, 10),
        "mode": (_choice("unidirectional", "bidirectional"), "unidirectional"),
    },
    "granger": {
        "order": (_order, "1"),
    },
    "features": {
        "threshold": (float, 1.0),
        "tau": (int, -1),
    },
    "classifier": {
        "model": (_choice("gcn", "ltp"), "ltp"),
        "folds": (int, 10),
        "validation_fraction": (float, 0.1),
        "standardization": (_choice("fold", "global"), "fold"),
        "epochs": (int, 150),
        "lr": (float, 0.005),
        "hidden_dims": (_ints, "16 16"),
        "aggregator": (_choice("mean", "sum", "max"), "mean"),
        "optimizer": (_choice("adam", "sgd"), "adam"),
        "n_trees": (int, 100),
        "max_depth": (int, 2),
        "max_features": (int, 5),
        "pooling": (_choice("flatten", "mean"), "flatten"),
        "shuffle_labels": (_bool, "false"),
    },
    "explain": {
        "n_samples": (int, 1000),
        "kernel_width": (_opt_float, "auto"),
        "pos": (float, 0.02),
        "neg": (float, -0.02),
        "aggregate": (_choice("out", "in"), "out"),
        "max_edges": (int, 500),
        "ridge": (float, 1e-3),
    },
    "report": {
        "r_x": (float, 3.8),
        "r_y": (float, 3.8),
        "beta_xy": (float, 0.0),
        "beta_yx": (float, 0.1),
        "T": (int, 1000),
        "taus": (_ints, "-5 -4 -3 -2 -1 1 2 3 4 5"),
    },
}

# keys that never change results and are left out of digests
NON_SEMANTIC = {("run", "jobs"), ("paths", "output_dir"), ("paths", "atlas"),
                ("paths", "manifest")}


@dataclass
class PipelineConfig:
    sections: dict
    path: Path | None = None
    extra: dict = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]

    @property
    def seed(self) -> int:
        return self.sections["run"]["seed"]

    @property
    def output_dir(self) -> Path:
        return self._path(self.sections["paths"]["output_dir"])

    @property
    def manifest(self) -> Path:
        return self._path(self.sections["paths"]["manifest"])

    @property
    def atlas(self) -> Path | None:
        a = self.sections["paths"]["atlas"]
        return self._path(a) if a else None

    def _path(self, p: str) -> Path:
        p = Path(p)
        if not p.is_absolute() and self.path is not None:
            p = self.path.parent / p
        return p

    def canonical(self, *names: str) -> dict:
        out = {"schema_version": SCHEMA_VERSION}
        for name in names:
            out[name] = {k: v for k, v in self.sections[name].items()
                         if (name, k) not in NON_SEMANTIC}
        return out

    def digest(self, *names: str, upstream: str | dict = "") -> str:
        payload = {"sections": self.canonical(*names), "upstream": upstream}
        return digest_of(payload)

    def with_overrides(self, **kv) -> "PipelineConfig":
        sections = {s: dict(v) for s, v in self.sections.items()}
        for dotted, value in kv.items():
            section, key = dotted.split(".")
            sections[section][key] = value
        return PipelineConfig(sections, self.path, dict(self.extra))


def digest_of(payload) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"not serialisable: {type(v).__name__}")


def parse_config(text: str, path: Path | None = None) -> PipelineConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    unknown = set(parser.sections()) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    sections = {}
    for name, keys in SCHEMA.items():
        raw = dict(parser[name]) if parser.has_section(name) else {}
        bad = set(raw) - set(keys)
        if bad:
            raise ConfigError(f"[{name}] unknown key(s): {', '.join(sorted(bad))}")
        parsed = {}
        for key, (conv, default) in keys.items():
            value = raw.get(key, default)
            if value is None:
                raise ConfigError(f"[{name}] {key} is required")
            try:
                parsed[key] = conv(value)
            except ValueError as exc:
                raise ConfigError(f"[{name}] {key} = {value!r}: {exc}") from exc
        sections[name] = parsed
    _check_values(sections)
    return PipelineConfig(sections, path)


def _check_values(s: dict):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(0 not in s["rcc"]["taus"], "[rcc] taus must not contain 0")
    need(len(s["rcc"]["taus"]) > 0, "[rcc] taus is empty")
    need(s["rcc"]["n_surrogates"] >= 20, "[rcc] n_surrogates must be >= 20")
    need(s["rcc"]["n_reservoirs"] >= 1, "[rcc] n_reservoirs must be >= 1")
    need(0 < s["rcc"]["train_fraction"] < 1, "[rcc] train_fraction must lie in (0, 1)")
    need(s["rcc"]["alpha"] >= 0, "[rcc] alpha must be >= 0")
    need(s["features"]["tau"] in s["rcc"]["taus"], "[features] tau must be one of [rcc] taus")
    need(len(s["classifier"]["hidden_dims"]) == 2, "[classifier] hidden_dims needs two values")
    need(s["classifier"]["folds"] >= 2, "[classifier] folds must be >= 2")
    need(s["explain"]["pos"] > s["explain"]["neg"], "[explain] pos must exceed neg")
    need(s["run"]["jobs"] >= 1, "[run] jobs must be >= 1")
    need(s["simulate"]["n_control"] >= 1 and s["simulate"]["n_patient"] >= 1,
         "[simulate] both groups need at least one subject")
    need(0 not in s["report"]["taus"], "[report] taus must not contain 0")
    r = s["reservoir"]
    need(r["n_units"] >= 1 and r["spectral_radius"] > 0 and 0 < r["leakage"] <= 1,
         "[reservoir] n_units >= 1, spectral_radius > 0 and leakage in (0, 1] required")


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, path.resolve())


def validate_paths(config: PipelineConfig, stage: str):
    """Referenced input paths must exist before a stage runs."""
    if stage == "simulate":
        return
    if not config.manifest.is_file():
        raise ConfigError(f"[paths] manifest {config.manifest} does not exist")
    if config.atlas is not None and not config.atlas.is_file():
        raise ConfigError(f"[paths] atlas {config.atlas} does not exist")
