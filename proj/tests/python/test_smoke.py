"""Smoke tests for the tialab python module (built by CMake / scikit-build)."""

import json
import math

import numpy as np
import pytest

import tialab


def test_cls_inconsistency_identical_rows():
    for n in (2, 4, 8, 16):
        m = np.tile([0.1, 0.2, 0.3, 0.4], (n, 1))
        assert tialab.cls_inconsistency(m) == pytest.approx(-math.log(n), abs=1e-12)


def test_cls_inconsistency_one_hot_pair():
    m = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert tialab.cls_inconsistency(m) == pytest.approx(-0.5822031088882179, abs=1e-12)


def test_cls_inconsistency_rejects_bad_rows():
    with pytest.raises(ValueError):
        tialab.cls_inconsistency(np.array([[0.7, 0.7], [0.5, 0.5]]))


def test_loc_inconsistency_worked_case():
    m = np.array([[1.0, 0, 0, 0], [-1.0, 0, 0, 0]])
    assert tialab.loc_inconsistency(m) == pytest.approx(0.25, abs=1e-14)
    same = np.tile([0.3, 0.4, 0.1, 0.2], (5, 1))
    assert tialab.loc_inconsistency(same) == 0.0


def test_alt_measures():
    a = np.array([[1.0, 0.0]])
    b = np.array([[0.0, 1.0]])
    assert tialab.alt_measure("l1", [a, b]) == pytest.approx(1.0)
    assert tialab.alt_measure("kl", [a, a]) == 0.0
    box = np.array([[0.5, 0.5, 0.2, 0.2]])
    assert tialab.alt_measure("variance", [box, box]) == 0.0


def test_task_da_loss():
    assert tialab.task_da_loss([0.1, 0.1], [0.4, 0.4]) == pytest.approx(-0.3)
    assert tialab.task_da_loss([0.2], [0.2]) == 0.0


def test_total_loss_defaults():
    assert tialab.total_loss(1.0, 1.0, 1.0, 1.0) == pytest.approx(3.01)


def test_iou_and_taxonomy():
    assert tialab.iou((0.5, 0.5, 1.0, 1.0), (1.0, 0.5, 1.0, 1.0)) == pytest.approx(1 / 3)
    assert tialab.classify_detection(0.6) == "Correct"
    assert tialab.classify_detection(0.4) == "MisLocalization"
    assert tialab.classify_detection(0.1) == "Background"
    assert tialab.classify_detection(0.5) == "Correct"
    assert tialab.classify_detection(0.3) == "MisLocalization"
    with pytest.raises(ValueError):
        tialab.classify_detection(1.5)


def _small_config(data_dir, mode="tia_full", seed=1):
    return {
        "mode": mode,
        "model": {
            "input_dim": 10,
            "num_classes": 4,
            "trunk_widths": [16, 12],
            "num_aux_classifiers": 3,
            "num_aux_localizers": 2,
            "disc_widths": [8],
            "with_task_discriminators": False,
        },
        "learning_rate": 0.02,
        "iterations": 25,
        "batch_source": 8,
        "batch_target": 8,
        "eval_interval": 25,
        "seed": seed,
        "datasets": {
            "source_train": f"{data_dir}/source_train.csv",
            "target_train": f"{data_dir}/target_train.csv",
            "source_test": f"{data_dir}/source_test.csv",
            "target_test": f"{data_dir}/target_test.csv",
        },
    }


def test_generate_train_evaluate_roundtrip(tmp_path):
    spec = json.loads(tialab.default_shift_spec())
    spec["train_per_domain"] = 80
    spec["test_per_domain"] = 24
    data_dir = str(tmp_path / "data")
    tialab.generate_dataset(json.dumps(spec), 5, data_dir)

    out_dir = str(tmp_path / "run")
    result = tialab.run_experiment(json.dumps(_small_config(data_dir)), out_dir)
    assert 0.0 <= result["tgt_acc"] <= 1.0
    assert math.isfinite(result["tgt_loc_mse"])
    assert (tmp_path / "run" / "metrics.csv").exists()
    assert (tmp_path / "run" / "model.json").exists()

    summary = tialab.evaluate(str(tmp_path / "run" / "model.json"),
                              f"{data_dir}/target_test.csv")
    assert summary["accuracy"] == pytest.approx(result["tgt_acc"])


def test_run_experiment_is_deterministic(tmp_path):
    spec = json.loads(tialab.default_shift_spec())
    spec["train_per_domain"] = 60
    spec["test_per_domain"] = 20
    data_dir = str(tmp_path / "data")
    tialab.generate_dataset(json.dumps(spec), 2, data_dir)
    cfg = json.dumps(_small_config(data_dir, seed=7))
    a = tialab.run_experiment(cfg)
    b = tialab.run_experiment(cfg)
    assert a["history"] == b["history"]
    assert a["tgt_acc"] == b["tgt_acc"]


def test_invalid_config_raises_value_error(tmp_path):
    with pytest.raises(ValueError):
        tialab.run_experiment("{\"mode\": \"nonsense\"}")


def test_gradient_suite_smoke():
    checks = tialab.run_gradient_suite(0)
    assert len(checks) >= 30
    assert all(c["pass"] for c in checks)
