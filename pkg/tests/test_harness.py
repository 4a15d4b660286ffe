import json
import os

import numpy as np
import pytest

from adaptmhe.harness import (PRESETS, DisturbanceSpec, ExperimentConfig, RunRecord,
                              compare_runs, emit_plots, generate_disturbances, preset,
                              run_experiment)


def test_disturbance_spec_validation():
    with pytest.raises(ValueError):
        DisturbanceSpec(components=(("uniform", -1.0),))
    with pytest.raises(ValueError):
        DisturbanceSpec(components=(("wobble",),))


def test_generate_disturbances_deterministic_and_bounded():
    spec = DisturbanceSpec(components=(("uniform", 0.5), ("zero",)))
    w1 = generate_disturbances(spec, 100, seed=7)
    w2 = generate_disturbances(spec, 100, seed=7)
    w3 = generate_disturbances(spec, 100, seed=8)
    assert np.array_equal(w1, w2)
    assert not np.array_equal(w1, w3)
    assert np.all(np.abs(w1[:, 0]) <= 0.5)
    assert np.all(w1[:, 1] == 0.0)


def test_square_wave_value_set():
    spec = DisturbanceSpec(components=(
        ("square_waves", ((5e-5, 800.0, 0.0), (5e-5, 1900.0, 0.0))),))
    w = generate_disturbances(spec, 4000, seed=0)[:, 0]
    vals = np.unique(np.round(w, 12))
    assert set(vals).issubset({-1e-4, 0.0, 1e-4})
    assert len(vals) == 3  # all three levels occur over the horizon


def test_presets_resolve():
    for name in PRESETS:
        cfg = preset(name)
        assert cfg.label == name
        assert cfg.resolved()["model"] == "chua"
    with pytest.raises(ValueError):
        preset("nope")


@pytest.fixture(scope="module")
def small_record():
    cfg = preset("chua-desk")
    cfg.t_sim = 60
    return run_experiment(cfg)


def test_run_record_shapes(small_record):
    r = small_record
    assert r.t.size == 61
    assert r.x_hat.shape == (61, 3) and r.z_hat.shape == (61, 1)
    assert r.has_baseline
    assert r.aborted_at is None
    # published t=0 estimates are the priors
    assert np.allclose(r.x_hat[0], [-1.0, 0.1, 2.0])
    assert np.allclose(r.z_hat[0], [0.6])


def test_record_roundtrip(tmp_path, small_record):
    path = os.path.join(tmp_path, "rec.csv")
    small_record.save(path)
    back = RunRecord.load(path)
    assert np.array_equal(back.as_matrix(), small_record.as_matrix())
    assert back.column_names() == small_record.column_names()
    assert back.config == small_record.config
    with open(path) as fh:
        header = fh.readline().strip()
    assert header.split(",") == small_record.column_names()


def test_save_is_byte_deterministic(tmp_path, small_record):
    p1 = os.path.join(tmp_path, "a.csv")
    p2 = os.path.join(tmp_path, "b.csv")
    small_record.save(p1)
    small_record.save(p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()
    assert open(p1[:-4] + ".meta.json", "rb").read() == open(p2[:-4] + ".meta.json", "rb").read()


def test_compare_runs_sum_consistency(small_record):
    s = compare_runs(small_record)
    n, no, nu = s["n_steps"], s["n_observable"], s["n_unobservable"]
    assert n == no + nu
    for side in ("proposed", "baseline"):
        recombined = (no * s[f"observable_mean_ez_{side}"]
                      + nu * s[f"unobservable_mean_ez_{side}"]) / n
        assert recombined == pytest.approx(s[f"overall_mean_ez_{side}"], abs=1e-12)


def test_compare_requires_baseline(small_record):
    r = small_record
    bare = RunRecord(config=r.config, t=r.t, x_true=r.x_true, z_true=r.z_true,
                     x_hat=r.x_hat, z_hat=r.z_hat, e_x=r.e_x, e_z=r.e_z,
                     alpha=r.alpha, observable=r.observable, iterations=r.iterations)
    with pytest.raises(ValueError):
        compare_runs(bare)


def test_emit_plots_deterministic(tmp_path, small_record):
    d1 = os.path.join(tmp_path, "p1")
    d2 = os.path.join(tmp_path, "p2")
    files1 = emit_plots(small_record, d1)
    files2 = emit_plots(small_record, d2)
    assert len(files1) == 6  # three data/script pairs
    for f1, f2 in zip(files1, files2):
        assert open(f1, "rb").read() == open(f2, "rb").read()


def test_sidecar_contains_resolved_config(tmp_path, small_record):
    path = os.path.join(tmp_path, "rec.csv")
    small_record.save(path)
    with open(os.path.join(tmp_path, "rec.meta.json")) as fh:
        meta = json.load(fh)
    cfg = meta["config"]
    assert cfg["seed"] == 42
    assert cfg["mhe"]["N"] == 50
    assert cfg["monitor"]["mu"] == pytest.approx(0.95)
