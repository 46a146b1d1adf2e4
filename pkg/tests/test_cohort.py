import numpy as np
import pytest

from resconn.cohort import (CohortSpec, aperiodic, default_atlas, format_edges, parse_edges,
                            simulate_cohort, simulate_subject, write_cohort)
from resconn.errors import DynamicsError
from resconn.timeseries import read_manifest


def test_parse_and_format_edges():
    assert parse_edges("0>1, 2>3") == ((0, 1), (2, 3))
    assert parse_edges("") == () and parse_edges(None) == ()
    assert format_edges(parse_edges("0>1,0>2")) == "0>1,0>2"
    with pytest.raises(ValueError, match="source>target"):
        parse_edges("0-1")


def test_coupling_matrix_planted_only_in_patients():
    spec = CohortSpec(n_rois=4, planted=((0, 1),), shared=((2, 3),), coupling=0.05)
    ctl, pat = spec.coupling_matrix("control"), spec.coupling_matrix("patient")
    assert ctl[2, 3] == pat[2, 3] == 0.05
    assert ctl[0, 1] == 0 and pat[0, 1] == 0.05
    assert np.count_nonzero(pat - ctl) == 1
    with pytest.raises(ValueError):
        CohortSpec(n_rois=3, planted=((0, 5),)).coupling_matrix("patient")


def test_aperiodic_detects_cycles():
    t = np.arange(500)
    assert not aperiodic(np.column_stack([np.random.default_rng(0).random(500), t % 3]))
    assert aperiodic(np.random.default_rng(1).random((500, 3)))


def test_every_subject_channel_is_aperiodic():
    spec = CohortSpec(n_control=10, n_patient=10, n_rois=10, T=600)
    cohort = simulate_cohort(spec, seed=11)
    assert len(cohort) == 20
    assert all(aperiodic(ts.data) for ts, _ in cohort)
    assert [ts.group for ts, _ in cohort] == ["control"] * 10 + ["patient"] * 10
    assert {side for ts, side in cohort if ts.group == "patient"} == {"left", "right"}


def test_periodic_window_only_raises():
    # r = 3.835 sits inside the period-3 window, so no draw can be aperiodic
    spec = CohortSpec(n_rois=2, T=300, planted=(), rate_low=3.835, rate_high=3.835)
    with pytest.raises(DynamicsError, match="aperiodic"):
        simulate_subject(spec, "control", 0, "s", max_draws=5)


def test_deterministic_and_seed_sensitive():
    spec = CohortSpec(n_control=2, n_patient=2, n_rois=3, T=200, planted=((0, 1),))
    a = simulate_cohort(spec, 4)
    b = simulate_cohort(spec, 4)
    c = simulate_cohort(spec, 5)
    assert all(np.array_equal(x.data, y.data) for (x, _), (y, _) in zip(a, b))
    assert not np.array_equal(a[0][0].data, c[0][0].data)


def test_default_atlas_hemispheres():
    atlas = default_atlas(5)
    assert atlas.hemispheres == ("L", "L", "L", "R", "R")
    assert len(atlas) == 5 and len(set(atlas.names)) == 5


def test_write_cohort(tmp_path):
    spec = CohortSpec(n_control=2, n_patient=3, n_rois=3, T=150, planted=((0, 1),))
    manifest = write_cohort(spec, tmp_path, seed=2)
    entries = read_manifest(manifest)
    assert len(entries) == 5 and all(e.path.is_file() for e in entries)
    assert (tmp_path / "atlas.csv").is_file()
