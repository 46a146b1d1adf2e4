import csv
import json

import numpy as np
import pytest

from resconn.cli import cmd_ec, ec_digest, main, run_stage
from resconn.config import load_config
from resconn.ecmatrix import read_ec
from resconn.errors import CompatibilityError, CompletenessError, DataError
from resconn.timeseries import read_manifest

SMALL = """
[paths]
manifest = cohort/manifest.csv
atlas = cohort/atlas.csv
output_dir = out

[run]
seed = {seed}

[simulate]
n_control = {n}
n_patient = {n}
n_rois = 4
T = 300
planted = 0>1

[rcc]
n_reservoirs = 2
n_surrogates = 20

[classifier]
folds = {folds}
epochs = 20
n_trees = 10

[explain]
n_samples = 200

[report]
T = 300
"""


def write_config(root, seed=3, n=4, folds=4, extra=""):
    root.mkdir(parents=True, exist_ok=True)
    p = root / "run.ini"
    p.write_text(SMALL.format(seed=seed, n=n, folds=folds) + extra)
    return p


def run(cfg, *stages, **flags):
    for stage in stages:
        args = [stage, "--config", str(cfg)]
        for k, v in flags.items():
            args += [f"--{k}"] if v is True else [f"--{k}", str(v)]
        code = main(args)
        assert code == 0, f"{stage} exited {code}"


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    cfg = write_config(root)
    run(cfg, "simulate", "ec", "classify", "explain", "report")
    return root, cfg


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_simulate_counts_and_determinism(tmp_path):
    a = write_config(tmp_path / "a", n=10)
    b = write_config(tmp_path / "b", n=10)
    run(a, "simulate")
    run(b, "simulate")
    subj = sorted((tmp_path / "a" / "cohort" / "subjects").glob("*.csv"))
    assert len(subj) == 20
    assert len(read_manifest(tmp_path / "a" / "cohort" / "manifest.csv")) == 20
    for f in subj:
        assert f.read_bytes() == (tmp_path / "b" / "cohort" / "subjects" / f.name).read_bytes()


def test_planted_edge_shows_in_group_means(pipeline):
    root, _ = pipeline
    means = {}
    for g in ("control", "patient"):
        rows = read_rows(root / "out" / "report" / f"ec_mean_{g}.csv")
        means[g] = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    diff = means["patient"] - means["control"]
    assert diff[0, 1] == diff.max() and diff[0, 1] > 0.2


def test_ec_counts_resume_and_granger(tmp_path):
    cfg_path = write_config(tmp_path, n=1)
    run(cfg_path, "simulate", "ec")
    files = sorted((tmp_path / "out" / "ec" / "rcc").glob("tau*/*.csv"))
    assert [f.parent.name for f in files] == ["tau-1", "tau-1", "tau-2", "tau-2"]
    assert json.loads(files[0].with_suffix(".json").read_text())["method"] == "rcc"

    config = load_config(cfg_path)
    before = {f: f.stat().st_mtime_ns for f in files}
    cmd_ec(config, resume=True)
    assert config.extra["ec_counts"] == {"computed": 0, "skipped": 2}
    assert before == {f: f.stat().st_mtime_ns for f in files}

    run(cfg_path, "ec", method="granger")
    gfiles = sorted((tmp_path / "out" / "ec" / "granger").glob("tau*/*.csv"))
    assert len(gfiles) == 4
    for r, g in zip(files, gfiles):
        er, eg = read_ec(r), read_ec(g)
        assert er.scores.shape == eg.scores.shape
        assert json.loads(g.with_suffix(".json").read_text())["method"] == "granger"
    assert main(["classify", "--config", str(cfg_path)]) == 2


def test_corrupt_ec_names_subject(tmp_path):
    cfg_path = write_config(tmp_path, n=1)
    run(cfg_path, "simulate", "ec")
    (tmp_path / "out" / "ec" / "rcc" / "tau-1" / "pat000.csv").write_text("garbage\n")
    with pytest.raises(DataError, match="pat000"):
        cmd_ec(load_config(cfg_path), resume=True)
    assert main(["ec", "--config", str(cfg_path), "--resume"]) == 3


def test_digest_mismatch_is_hard_error(pipeline, tmp_path):
    root, cfg = pipeline
    other = write_config(root / "variant", extra="\n[reservoir]\nleakage = 0.5\n")
    text = other.read_text().replace("cohort/", "../cohort/").replace("= out", "= ../out")
    other.write_text(text)
    config = load_config(other)
    assert ec_digest(config) != ec_digest(load_config(cfg))
    with pytest.raises(CompatibilityError):
        run_stage("classify", config)
    assert main(["classify", "--config", str(other)]) == 3


def test_classify_report_contents(pipeline):
    root, _ = pipeline
    cdir = root / "out" / "classify" / "rcc" / "ltp"
    report = json.loads((cdir / "report.json").read_text())
    for name in ("auc", "accuracy", "precision", "recall", "f1"):
        assert name in json.dumps(report)
    assert report["config_digest"]
    rows = read_rows(cdir / "scores.csv")
    assert rows[0] == ["subject_id", "fold", "label", "score"] and len(rows) == 9


def test_explain_outputs(pipeline):
    root, _ = pipeline
    edir = root / "out" / "explain" / "rcc" / "ltp"
    nets = json.loads((edir / "networks.json").read_text())
    assert nets["pos"] == 0.02 and nets["neg"] == -0.02
    for sid in nets["explained"]:
        rows = read_rows(edir / "subjects" / f"{sid}_edges.csv")
        assert rows[0] == ["source", "target", "coefficient"]


def test_report_shapes(pipeline):
    root, _ = pipeline
    rdir = root / "out" / "report"
    hemi = read_rows(rdir / "hemispheric.csv")
    assert hemi[0] == ["group", "LL", "RR", "LR", "RL"] and len(hemi) == 3
    for block, t, p in read_rows(rdir / "hemispheric_ttest.csv")[1:]:
        assert p == "nan" or 0.0 <= float(p) <= 1.0
    skill = read_rows(rdir / "skill_curve.csv")
    assert len(skill) == 11
    manifest = json.loads((root / "out" / "run_manifest.json").read_text())
    stages = manifest["stages"]
    assert set(stages) == {"simulate", "ec", "classify", "explain", "report"}
    assert len({s["digest"] for s in stages.values()}) == 5
    assert all(s["wall_time_s"] >= 0 for s in stages.values())


def test_group_mean_of_identical_subjects(tmp_path):
    cfg_path = write_config(tmp_path, n=4, folds=2)
    run(cfg_path, "simulate", "ec", "classify")
    ecdir = tmp_path / "out" / "ec" / "rcc" / "tau-1"
    for g in ("ctl", "pat"):
        for k in (1, 2, 3):
            (ecdir / f"{g}00{k}.csv").write_bytes((ecdir / f"{g}000.csv").read_bytes())
    run(cfg_path, "report")
    for g, tag in (("control", "ctl"), ("patient", "pat")):
        mean = read_rows(tmp_path / "out" / "report" / f"ec_mean_{g}.csv")
        one = read_ec(ecdir / f"{tag}000.csv")
        got = np.array([[float(v) for v in r[1:]] for r in mean[1:]])
        assert np.array_equal(got, one.scores)


def test_missing_stage_outputs_listed(tmp_path):
    cfg_path = write_config(tmp_path, n=2, folds=2)
    run(cfg_path, "simulate", "ec")
    (tmp_path / "out" / "ec" / "rcc" / "tau-1" / "ctl001.csv").unlink()
    with pytest.raises(CompletenessError, match="ctl001"):
        run_stage("classify", load_config(cfg_path))
    with pytest.raises(CompletenessError, match="ctl001"):
        run_stage("report", load_config(cfg_path))


def test_exit_codes(tmp_path, capsys):
    assert main(["ec", "--config", str(tmp_path / "absent.ini")]) == 2
    cfg_path = write_config(tmp_path)
    assert main(["ec", "--config", str(cfg_path)]) == 2
    assert main(["simulate", "--config", str(cfg_path), "--jobs", "0"]) == 2
    run(cfg_path, "simulate")
    (tmp_path / "cohort" / "subjects" / "ctl000.csv").write_text("a,b\n1,x\n")
    assert main(["ec", "--config", str(cfg_path)]) == 3
    assert "error:" in capsys.readouterr().err


def test_seed_flag_overrides_config(tmp_path):
    a = write_config(tmp_path / "a")
    b = write_config(tmp_path / "b", seed=99)
    run(a, "simulate", seed=99)
    run(b, "simulate")
    fa = tmp_path / "a" / "cohort" / "subjects" / "pat000.csv"
    assert fa.read_bytes() == (tmp_path / "b" / "cohort" / "subjects" / "pat000.csv").read_bytes()
