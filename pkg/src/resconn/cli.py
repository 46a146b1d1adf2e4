"""Command-line pipeline: simulate -> ec -> classify -> explain -> report.

Layout under ``[paths] output_dir``::

    ec/<method>/tau<t>/<subject>.csv (+ .json sidecar)
    classify/<method>/<model>/{report.json, scores.csv, model.json}
    explain/<method>/<model>/{subjects/<subject>_edges.csv, roi_scores_<group>.csv, networks.json}
    report/{skill_curve.csv, hemispheric.csv, hemispheric_ttest.csv,
            ec_mean_<group>.csv, metrics.csv, report.json}
    run_manifest.json

Each stage output records the digest of the configuration it was produced
with; a downstream stage refuses inputs whose digest differs from the one
the current configuration implies.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .classifiers import METRIC_NAMES, crossval
from .cohort import CohortSpec, default_atlas, simulate_cohort
from .config import PipelineConfig, digest_of, load_config, validate_paths
from .ecmatrix import ECMatrix, read_ec, write_ec
from .errors import (CompatibilityError, CompletenessError, ConfigError, DataError,
                     IndeterminateError, ResconnError)
from .explain import (aggregate_roi, lime_explain, map_to_networks, read_atlas, threshold_rois,
                      write_atlas, write_edge_coefficients, write_network_histogram,
                      write_roi_scores)
from .granger import gc_matrix
from .rcc import (BLOCKS, RCCSettings, estimate_ec, group_ttest, hemispheric_summary,
                  prediction_skill, write_skill_curve)
from .reservoir import ReservoirConfig
from .timeseries import (GROUPS, CoupledLogisticParams, ManifestEntry, load_cohort,
                         read_manifest, save_timeseries, simulate_coupled_logistic,
                         write_manifest)
from .workflow import FittedGraphModel, GraphModelSpec

logger = logging.getLogger("resconn")

STAGES = ("simulate", "ec", "classify", "explain", "report")
MODEL_KINDS = {"gcn": "gcn", "ltp": "forest"}


# digests -------------------------------------------------------------------

def data_digest(config: PipelineConfig) -> str:
    """Hash of the manifest and every subject file it lists."""
    h = hashlib.sha256(config.manifest.read_bytes())
    for e in sorted(read_manifest(config.manifest), key=lambda e: e.subject_id):
        h.update(e.subject_id.encode())
        try:
            h.update(e.path.read_bytes())
        except OSError as exc:
            raise DataError(f"subject {e.subject_id}: cannot read {e.path}") from exc
    return h.hexdigest()


def ec_digest(config: PipelineConfig, data: str | None = None) -> str:
    data = data or data_digest(config)
    method = config["run"]["method"]
    taus = list(config["rcc"]["taus"])
    if method == "rcc":
        return config.digest("reservoir", "rcc",
                             upstream={"method": method, "seed": config.seed, "data": data})
    return config.digest("granger", upstream={"method": method, "taus": taus, "data": data})


def classify_digest(config: PipelineConfig, ec: str) -> str:
    return config.digest("features", "classifier", upstream={"ec": ec, "seed": config.seed})


def explain_digest(config: PipelineConfig, cls: str) -> str:
    return config.digest("explain", upstream={"classify": cls, "seed": config.seed})


# paths -----------------------------------------------------------------------

def ec_path(config: PipelineConfig, tau: int, subject_id: str) -> Path:
    return config.output_dir / "ec" / config["run"]["method"] / f"tau{tau}" / f"{subject_id}.csv"


def model_tag(config: PipelineConfig) -> str:
    tag = config["classifier"]["model"]
    return tag + "_shuffled" if config["classifier"]["shuffle_labels"] else tag


def classify_dir(config: PipelineConfig) -> Path:
    return config.output_dir / "classify" / config["run"]["method"] / model_tag(config)


def explain_dir(config: PipelineConfig) -> Path:
    return config.output_dir / "explain" / config["run"]["method"] / model_tag(config)


def report_dir(config: PipelineConfig) -> Path:
    return config.output_dir / "report"


# run manifest --------------------------------------------------------------

def versions() -> dict:
    return {"resconn": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def record_stage(config: PipelineConfig, stage: str, digest: str, wall: float, outputs):
    path = config.output_dir / "run_manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except (OSError, ValueError):
        manifest = {"stages": {}}
    manifest["config_digest"] = config.digest(*[s for s in config.sections if s != "paths"])
    manifest["versions"] = versions()
    base = config.output_dir
    rel = sorted(str(Path(p).relative_to(base)) if Path(p).is_relative_to(base) else str(p)
                 for p in outputs)
    manifest["stages"][stage] = {"digest": digest, "wall_time_s": round(wall, 3),
                                 "outputs": rel}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


# stages ----------------------------------------------------------------------

def cohort_spec(config: PipelineConfig) -> CohortSpec:
    s = config["simulate"]
    return CohortSpec(s["n_control"], s["n_patient"], s["n_rois"], s["T"], s["coupling"],
                      s["rate_low"], s["rate_high"], s["planted"], s["shared"], s["transient"])


def cmd_simulate(config: PipelineConfig) -> list[Path]:
    spec = cohort_spec(config)
    try:
        spec.coupling_matrix("patient")
    except ValueError as exc:
        raise ConfigError(f"[simulate] {exc}") from exc
    manifest = config.manifest
    root = manifest.parent
    (root / "subjects").mkdir(parents=True, exist_ok=True)
    outputs, entries = [], []
    for ts, side in simulate_cohort(spec, config.seed):
        p = save_timeseries(ts, root / "subjects" / f"{ts.subject_id}.csv")
        entries.append(ManifestEntry(ts.subject_id, p, ts.group, side))
        outputs.append(p)
    outputs.append(write_manifest(entries, manifest))
    outputs.append(write_atlas(default_atlas(spec.n_rois), config.atlas or root / "atlas.csv"))
    digest = config.digest("simulate", upstream={"seed": config.seed})
    meta = root / "cohort.json"
    meta.write_text(json.dumps({"config_digest": digest, "seed": config.seed,
                                "simulate": config.canonical("simulate")["simulate"]},
                               indent=1, sort_keys=True, default=list) + "\n")
    outputs.append(meta)
    logger.info("simulated %d subjects into %s", len(entries), root)
    return outputs


def rcc_settings(config: PipelineConfig) -> RCCSettings:
    r, c = config["reservoir"], config["rcc"]
    res = ReservoirConfig(n_units=r["n_units"], sparsity_in=r["sparsity_in"],
                          sparsity_rec=r["sparsity_rec"], input_scaling=r["input_scaling"],
                          input_shift=r["input_shift"], bias_scaling=r["bias_scaling"],
                          bias_shift=r["bias_shift"], spectral_radius=r["spectral_radius"],
                          leakage=r["leakage"])
    return RCCSettings(taus=c["taus"], n_reservoirs=c["n_reservoirs"],
                       n_surrogates=c["n_surrogates"], alpha=c["alpha"],
                       train_fraction=c["train_fraction"], washout=c["washout"],
                       mode=c["mode"], reservoir=res)


def _completed(config, ts, digest) -> bool:
    """True when every lag of the subject is on disk with the current digest."""
    paths = [ec_path(config, t, ts.subject_id) for t in config["rcc"]["taus"]]
    if not all(p.exists() for p in paths):
        return False
    for p in paths:
        try:
            ec = read_ec(p)
        except DataError as exc:
            raise DataError(f"corrupt EC output for subject {ts.subject_id}: {exc}") from exc
        if ec.meta.get("config_digest") != digest:
            return False
        if ec.n_nodes != ts.n_channels:
            raise DataError(f"corrupt EC output for subject {ts.subject_id}: "
                            f"{ec.n_nodes} nodes, expected {ts.n_channels}")
    return True


def cmd_ec(config: PipelineConfig, resume: bool = False) -> list[Path]:
    method = config["run"]["method"]
    cohort = load_cohort(config.manifest)
    digest = ec_digest(config)
    taus = config["rcc"]["taus"]
    settings = rcc_settings(config)
    outputs, computed, skipped = [], 0, 0
    for ts in cohort:
        paths = [ec_path(config, t, ts.subject_id) for t in taus]
        if resume and _completed(config, ts, digest):
            skipped += 1
            outputs += paths
            continue
        if method == "rcc":
            ecs = estimate_ec(ts, taus, settings, config.seed, config["run"]["jobs"])
        else:
            gc = gc_matrix(ts, config["granger"]["order"])
            ecs = {t: ECMatrix(gc.scores, t, gc.subject_id, gc.group, dict(gc.meta)) for t in taus}
        for t, p in zip(taus, paths):
            outputs.append(write_ec(ecs[t], p, config_digest=digest, method=method))
        computed += 1
        logger.info("EC %s (%s): done", ts.subject_id, method)
    logger.info("EC stage: %d computed, %d resumed", computed, skipped)
    config.extra["ec_counts"] = {"computed": computed, "skipped": skipped}
    return outputs


def load_stage_ecs(config: PipelineConfig, digest: str, tau: int | None = None):
    """EC matrices of every manifest subject at ``tau``, checked against ``digest``."""
    tau = config["features"]["tau"] if tau is None else tau
    entries = read_manifest(config.manifest)
    missing = [e.subject_id for e in entries if not ec_path(config, tau, e.subject_id).exists()]
    if missing:
        raise CompletenessError(f"missing EC files for tau={tau}: {', '.join(missing)}; "
                                f"run the ec stage first")
    ecs = []
    for e in entries:
        try:
            ec = read_ec(ec_path(config, tau, e.subject_id))
        except DataError as exc:
            raise DataError(f"subject {e.subject_id}: {exc}") from exc
        if ec.meta.get("config_digest") != digest:
            raise CompatibilityError(f"EC file of subject {e.subject_id} was produced with a "
                                     f"different configuration; rerun the ec stage")
        ecs.append(replace(ec, group=e.group))
    return ecs, entries


def graph_model_spec(config: PipelineConfig) -> GraphModelSpec:
    c = config["classifier"]
    return GraphModelSpec(kind=MODEL_KINDS[c["model"]], threshold=config["features"]["threshold"],
                          pooling=c["pooling"], epochs=c["epochs"], lr=c["lr"],
                          hidden_dims=tuple(c["hidden_dims"]), aggregator=c["aggregator"],
                          optimizer=c["optimizer"], n_trees=c["n_trees"],
                          max_depth=c["max_depth"], max_features=c["max_features"],
                          name=f"{config['run']['method']}+{c['model']}")


def labels(config: PipelineConfig, entries) -> np.ndarray:
    y = np.array([1 if e.group == "patient" else 0 for e in entries])
    if config["classifier"]["shuffle_labels"]:
        y = np.random.default_rng([config.seed, 1]).permutation(y)
    return y


def cmd_classify(config: PipelineConfig) -> list[Path]:
    ecd = ec_digest(config)
    ecs, entries = load_stage_ecs(config, ecd)
    y = labels(config, entries)
    spec = graph_model_spec(config)
    c = config["classifier"]
    if c["folds"] > len(entries):
        raise ConfigError(f"[classifier] folds={c['folds']} exceeds the {len(entries)} subjects")
    if c["standardization"] == "global":
        from .timeseries import control_stats
        spec.standardization = "global"
        spec.global_stats = control_stats([ec for ec, lab in zip(ecs, y) if lab == 0])
    report = crossval(ecs, y, spec, k=c["folds"], seed=config.seed,
                      validation_fraction=c["validation_fraction"],
                      subject_ids=[e.subject_id for e in entries])
    digest = classify_digest(config, ecd)
    report.config_digest = digest
    out = classify_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    paths = [report.write(out / "report.json")]
    with (out / "scores.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "fold", "label", "score"])
        for row in report.scores:
            w.writerow([row["subject_id"], row["fold"], row["label"], repr(row["score"])])
    paths.append(out / "scores.csv")
    fitted = spec.fit(ecs, y, config.seed)
    payload = {"config_digest": digest, "ec_digest": ecd, "tau": config["features"]["tau"],
               **fitted.to_dict()}
    (out / "model.json").write_text(json.dumps(payload, sort_keys=True) + "\n")
    paths.append(out / "model.json")
    logger.info("%s: AUC %.3f +/- %.3f", spec.name, report.mean["auc"], report.std["auc"])
    return paths


def load_model(config: PipelineConfig, digest: str) -> FittedGraphModel:
    path = classify_dir(config) / "model.json"
    if not path.exists():
        raise CompletenessError(f"no trained model at {path}; run the classify stage first")
    try:
        payload = json.loads(path.read_text())
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if payload.get("config_digest") != digest:
        raise CompatibilityError(f"{path} was trained with a different configuration; "
                                 f"rerun the classify stage")
    return FittedGraphModel.from_dict(payload)


def read_scores(path: Path) -> dict[str, tuple[int, float]]:
    with path.open(newline="") as fh:
        return {r["subject_id"]: (int(r["label"]), float(r["score"])) for r in csv.DictReader(fh)}


def subject_seed(root: int, subject_id: str) -> int:
    return int.from_bytes(hashlib.sha256(f"{root}|explain|{subject_id}".encode()).digest()[:4],
                          "little")


def _atlas(config: PipelineConfig, n_nodes: int):
    if config.atlas is None:
        return default_atlas(n_nodes)
    atlas = read_atlas(config.atlas)
    if len(atlas) != n_nodes:
        raise DataError(f"atlas lists {len(atlas)} nodes, EC matrices have {n_nodes}")
    return atlas


def cmd_explain(config: PipelineConfig) -> list[Path]:
    ecd = ec_digest(config)
    cls = classify_digest(config, ecd)
    fitted = load_model(config, cls)
    ecs, entries = load_stage_ecs(config, ecd)
    if ecs[0].n_nodes != fitted.n_nodes:
        raise CompatibilityError(f"model expects {fitted.n_nodes} nodes, EC matrices have "
                                 f"{ecs[0].n_nodes}")
    atlas = _atlas(config, fitted.n_nodes)
    ex = config["explain"]
    scores = read_scores(classify_dir(config) / "scores.csv")
    out = explain_dir(config)
    (out / "subjects").mkdir(parents=True, exist_ok=True)
    for old in (out / "subjects").glob("*_edges.csv"):
        old.unlink()
    paths, per_group, explained, skipped = [], {g: [] for g in GROUPS}, [], []
    for ec, e in zip(ecs, entries):
        label, score = scores[e.subject_id]
        # only correctly classified subjects are explained
        if (score >= 0.5) != (label == 1):
            continue
        graph = fitted.graphs([ec])[0]
        if graph.n_edges == 0:
            skipped.append(e.subject_id)
            continue
        m = min(graph.n_edges, ex["max_edges"])
        if ex["n_samples"] < 10 * m:
            raise ConfigError(f"[explain] n_samples={ex['n_samples']} is below 10 x {m} edges "
                              f"for subject {e.subject_id}")
        exp = lime_explain(fitted.predict_graph, graph, ex["n_samples"], ex["kernel_width"],
                           subject_seed(config.seed, e.subject_id), ex["ridge"],
                           ex["max_edges"], ex["pos"], ex["neg"], ex["aggregate"])
        paths.append(write_edge_coefficients(exp, out / "subjects" / f"{e.subject_id}_edges.csv",
                                             atlas.names))
        per_group[e.group].append(exp.roi_scores)
        explained.append(e.subject_id)
    hist = {}
    for group in GROUPS:
        rows = per_group[group]
        mean = np.mean(rows, axis=0) if rows else np.zeros(fitted.n_nodes)
        paths.append(write_roi_scores(mean, out / f"roi_scores_{group}.csv", ex["pos"], ex["neg"],
                                      atlas.names))
        stroke, control = threshold_rois(mean, ex["pos"], ex["neg"])
        hist[group] = {"n_explained": len(rows),
                       "stroke_indicative": map_to_networks(stroke, atlas),
                       "control_indicative": map_to_networks(control, atlas),
                       "stroke_nodes": [atlas.names[v] for v in sorted(stroke)],
                       "control_nodes": [atlas.names[v] for v in sorted(control)]}
    paths.append(write_network_histogram({"groups": hist}, out / "networks.json",
                                         pos=ex["pos"], neg=ex["neg"],
                                         config_digest=explain_digest(config, cls),
                                         explained=explained, skipped_no_edges=skipped))
    logger.info("explained %d subjects", len(explained))
    return paths


def _write_rows(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _fmt(v) -> str:
    return repr(float(v))


def cmd_report(config: PipelineConfig) -> list[Path]:
    ecd = ec_digest(config)
    cls = classify_digest(config, ecd)
    report_json = classify_dir(config) / "report.json"
    missing = []
    try:
        ecs, entries = load_stage_ecs(config, ecd)
    except CompletenessError as exc:
        missing.append(str(exc))
        ecs = None
    if not report_json.exists():
        missing.append(f"classification report {report_json}")
    if missing:
        raise CompletenessError("report needs earlier stages: " + "; ".join(missing))
    cv = json.loads(report_json.read_text())
    if cv.get("config_digest") != cls:
        raise CompatibilityError(f"{report_json} was produced with a different configuration")
    out = report_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    # skill curves of a coupled pair, with the surrogate mean
    r = config["report"]
    params = CoupledLogisticParams(r_x=r["r_x"], r_y=r["r_y"], beta_xy=r["beta_xy"],
                                   beta_yx=r["beta_yx"])
    pair = simulate_coupled_logistic(params, r["T"], seed=config.seed).data
    settings = rcc_settings(config)
    curve = prediction_skill(pair[:, 0], pair[:, 1], sorted(r["taus"]), settings.reservoir,
                             settings.n_reservoirs, settings.alpha, config.seed,
                             n_surrogates=settings.n_surrogates, settings=settings)
    paths.append(write_skill_curve(curve, out / "skill_curve.csv"))

    atlas = _atlas(config, ecs[0].n_nodes)
    by_group = {g: [ec for ec in ecs if ec.group == g] for g in GROUPS}
    for g, members in by_group.items():
        if not members:
            continue
        mean = np.mean([ec.scores for ec in members], axis=0)
        paths.append(_write_rows(out / f"ec_mean_{g}.csv", ["source", *atlas.names],
                                 [[atlas.names[i], *map(_fmt, row)] for i, row in enumerate(mean)]))

    blocks = {g: [hemispheric_summary(ec, atlas.hemispheres) for ec in members]
              for g, members in by_group.items() if members}
    paths.append(_write_rows(out / "hemispheric.csv", ["group", *BLOCKS],
                             [[g, *(_fmt(np.mean([b[k] for b in rows])) for k in BLOCKS)]
                              for g, rows in blocks.items()]))
    test_rows = []
    for k in BLOCKS:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                t, p = group_ttest([b[k] for b in blocks.get("patient", [])],
                                   [b[k] for b in blocks.get("control", [])])
                test_rows.append([k, _fmt(t), _fmt(p)])
        except (IndeterminateError, ValueError) as exc:
            logger.warning("t-test for block %s skipped: %s", k, exc)
            test_rows.append([k, "nan", "nan"])
    paths.append(_write_rows(out / "hemispheric_ttest.csv", ["block", "t", "p"], test_rows))

    metric_rows = [[cv["method"], name, _fmt(cv["mean"][name] if cv["mean"][name] is not None
                                             else float("nan")),
                    _fmt(cv["std"][name] if cv["std"][name] is not None else float("nan")),
                    _fmt(cv["pooled"][name])] for name in METRIC_NAMES]
    paths.append(_write_rows(out / "metrics.csv", ["method", "metric", "mean", "std", "pooled"],
                             metric_rows))
    summary = {"config_digest": config.digest("report", upstream={"classify": cls}),
               "ec_digest": ecd, "classify_digest": cls,
               "files": sorted(p.name for p in paths)}
    (out / "report.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    paths.append(out / "report.json")
    return paths


COMMANDS = {"simulate": cmd_simulate, "ec": cmd_ec, "classify": cmd_classify,
            "explain": cmd_explain, "report": cmd_report}


def stage_digest(config: PipelineConfig, stage: str) -> str:
    if stage == "simulate":
        return config.digest("simulate", upstream={"seed": config.seed})
    ecd = ec_digest(config)
    if stage == "ec":
        return ecd
    cls = classify_digest(config, ecd)
    if stage == "classify":
        return cls
    if stage == "explain":
        return explain_digest(config, cls)
    return config.digest("report", upstream={"classify": cls})


def run_stage(stage: str, config: PipelineConfig, resume: bool = False) -> list[Path]:
    validate_paths(config, stage)
    start = time.perf_counter()
    outputs = cmd_ec(config, resume) if stage == "ec" else COMMANDS[stage](config)
    wall = time.perf_counter() - start
    digest = stage_digest(config, stage)
    record_stage(config, stage, digest, wall, outputs)
    return outputs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resconn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"resconn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="pipeline INI file")
        p.add_argument("--method", choices=("rcc", "granger"))
        p.add_argument("--model", choices=("gcn", "ltp"))
        p.add_argument("--jobs", type=int)
        p.add_argument("--seed", type=int, help="overrides [run] seed")
        p.add_argument("--resume", action="store_true",
                       help="skip subjects whose EC files match the current digest")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def apply_overrides(config: PipelineConfig, args) -> PipelineConfig:
    over = {}
    if args.method:
        over["run.method"] = args.method
    if args.model:
        over["classifier.model"] = args.model
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        over["run.jobs"] = args.jobs
    if args.seed is not None:
        over["run.seed"] = args.seed
    return config.with_overrides(**over) if over else config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = apply_overrides(load_config(args.config), args)
        outputs = run_stage(args.command, config, args.resume)
    except ResconnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return DataError.exit_code
    print(f"{args.command}: wrote {len(outputs)} file(s) under {config.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
