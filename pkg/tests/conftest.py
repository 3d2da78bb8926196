"""Pytest configuration and fixtures."""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from model_triage.dataio import SyntheticSpec, generate_synthetic
from model_triage.nn import LabeledDataset, NetworkSpec, TrainConfig, train


def _linear_oracle_accuracy(data: LabeledDataset, steps: int = 720) -> float:
    """Best accuracy of any 2-D linear classifier found by sweeping directions and thresholds."""
    best = 0.0
    for angle in np.linspace(0.0, 2.0 * np.pi, steps, endpoint=False):
        direction = np.array([np.cos(angle), np.sin(angle)])
        scores = data.inputs @ direction
        for threshold in np.unique(scores):
            predicted = (scores > threshold).astype(np.int64)
            best = max(best, float(np.mean(predicted == data.labels)))
    return best


@pytest.fixture
def project_root():
    """Return the project root directory."""
    return Path(__file__).resolve().parents[1]


@pytest.fixture
def rng():
    """Seeded generator for property checks."""
    return np.random.default_rng(20240611)


@pytest.fixture
def blobs():
    """Two well separated 2-D Gaussian blobs, 100 cases each."""
    return generate_synthetic(
        SyntheticSpec(
            class_count=2,
            cases_per_class=100,
            dimension=2,
            separation=8.0,
            noise_sigma=1.0,
            seed=0,
        )
    )


@pytest.fixture
def fast_cfg():
    """Training settings that converge quickly on the blob fixtures."""
    return TrainConfig(learning_rate=0.1, epochs=30, batch_size=16, seed=0)


@pytest.fixture
def trained_blob_model(blobs, fast_cfg):
    """A 2-hidden-layer model trained on the blob fixture."""
    spec = NetworkSpec.dense(2, [8, 8], 2)
    return train(spec, blobs, fast_cfg)


@pytest.fixture
def tiny_config_data(tmp_path):
    """A small synthetic experiment that runs in well under a second."""
    return {
        "dataset": {
            "synthetic": {
                "class_count": 3,
                "cases_per_class": 40,
                "test_cases_per_class": 20,
                "dimension": 4,
                "separation": 2.5,
                "noise_sigma": 1.0,
                "seed": 0,
            }
        },
        "network": {"hidden_widths": [8, 8]},
        "base_training": {"learning_rate": 0.05, "epochs": 5, "batch_size": 16},
        "probe_training": {"learning_rate": 0.05, "epochs": 5, "batch_size": 16, "seed": 1},
        "output_dir": str(tmp_path / "run"),
        "seed": 0,
    }


@pytest.fixture
def tiny_config_file(tmp_path, tiny_config_data):
    """The tiny experiment written as a JSON config file."""
    path = tmp_path / "config.json"
    path.write_text(json.dumps(tiny_config_data))
    return path


@pytest.fixture
def linear_oracle():
    """Brute-force linear separability oracle for 2-D, 2-class data."""
    return _linear_oracle_accuracy


@pytest.fixture
def sample_report():
    """A five-layer report with two UTD cases, one SD case and a UTD injection."""
    from model_triage.footprints import CaseDiagnosis, CorrectTrend, DefectType, TrendThresholds, aggregate
    from model_triage.injection import InjectionManifest
    from model_triage.report import build_report

    defects = aggregate(
        [
            CaseDiagnosis(case_id=3, defect=DefectType.UTD, ranks=(1, 2, 2, 3, 3), true_label=0, predicted_label=2),
            CaseDiagnosis(case_id=8, defect=DefectType.UTD, ranks=(2, 2, 3, 3, 3), true_label=0, predicted_label=1),
            CaseDiagnosis(case_id=11, defect=DefectType.SD, ranks=(4, 3, 2, 2, 2), true_label=1, predicted_label=0),
        ]
    )
    manifest = InjectionManifest(
        kind=DefectType.UTD, seed=5, utd_source=0, utd_target=2, utd_fraction=0.5, relabeled_case_ids=[1, 4, 9]
    )
    return build_report(
        defects,
        config={"seed": 7},
        layer_count=5,
        thresholds=TrendThresholds(ascend=1, descend=1),
        base_test_accuracy=0.85,
        probe_train_accuracy=[0.61234567, 0.7, 0.8, 0.9],
        test_case_count=20,
        correct_trends={CorrectTrend.STABLE: 12, CorrectTrend.CONVERGING: 5},
        injection=manifest,
    )
