import json
import math

import numpy as np
import pytest

import biomark


def test_auc_pairs_with_ties():
    y = [0, 0, 1, 1, 1]
    s = [0.1, 0.4, 0.4, 0.8, 0.9]
    # 6 pairs: 5 wins + one tie
    assert biomark.roc_auc(y, s) == pytest.approx(5.5 / 6)
    m = biomark.compute_metrics(y, s)
    assert set(m) == {"acc", "sens", "spec", "auc"}
    assert m["sens"] == pytest.approx(2 / 3)


def test_single_class_is_rejected():
    with pytest.raises(biomark.ValidationError):
        biomark.roc_auc([1, 1], [0.2, 0.3])


def test_relieff_separating_feature():
    rng = np.random.default_rng(0)
    y = np.array([0, 1] * 6)
    x = np.column_stack([y.astype(float), rng.random(12)])
    s = biomark.relieff_rank(x, y.tolist(), neighbors=3)
    assert s[0] == 1.0
    assert s[1] < 1.0


def test_glmnet_path_starts_at_the_null_model():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(60, 4))
    y = (x[:, 0] + rng.normal(size=60) > 0).astype(int)
    p = biomark.glmnet_fit_path(x, y.tolist(), n_lambda=20)
    assert p["betas"].shape[0] == 4
    assert np.all(p["betas"][:, 0] == 0.0)
    assert list(p["lambdas"]) == sorted(p["lambdas"], reverse=True)


def test_filter_and_band_power():
    assert biomark.butterworth_magnitude("lowpass", 9, [95.0], 1000.0, [95.0])[0] == pytest.approx(1 / math.sqrt(2), abs=1e-6)
    fs = 250.0
    t = np.arange(250 * 10) / fs
    rel = biomark.band_relative_power(np.sin(2 * np.pi * 10 * t).tolist(), fs)
    assert rel["alpha"] >= 0.95


def test_studentized_range():
    assert biomark.studentized_range_critical(0.05, 3, 12) == pytest.approx(3.77, abs=0.02)
    assert 0.0 < biomark.studentized_range_cdf(3.0, 3, 12) < 1.0


def test_grid_run_and_rerun(tmp_path):
    informative = biomark.write_synth(tmp_path / "mag", rows=40, positives=20, informative=2, noise=4, effect_size=1.5, seed=5)
    assert len(informative) == 2
    manifest = {
        "seed": 9, "K": 4, "R": 2,
        "datasets": [{"modality": "MAG", "features": "mag/features.csv", "covariates": "mag/covariates.csv",
                      "labels": "mag/labels.csv", "sidecar": "mag/columns.json"}],
        "grid": {"classifiers": ["GNB", "GLMNET"], "sensors": ["MAG"]},
    }
    path = tmp_path / "grid.json"
    path.write_text(json.dumps(manifest))
    first = biomark.run_experiment(path, tmp_path / "out")
    assert first["computed"] == 2 and not first["failures"]
    results = (tmp_path / "out" / "results.csv").read_bytes()
    again = biomark.run_experiment(path, tmp_path / "out")
    assert again["skipped"] == 2
    assert (tmp_path / "out" / "results.csv").read_bytes() == results
