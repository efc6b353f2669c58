import numpy as np
import pytest

import synth
from hakw.corpus import split_manifest
from hakw.features import FeatureConfig
from hakw.nn import ModelConfig, TrainConfig, train
from hakw.pipeline import manifest_labels, split_features

_ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE_RESULTS.append((name, "PASS" if report.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for name, outcome in _ACCEPTANCE_RESULTS:
            terminalreporter.write_line(f"[{outcome}] {name}")


@pytest.fixture(scope="session")
def mini_setup(tmp_path_factory):
    """A small trained LSTM over a 3-keyword (+reserved) synthetic corpus."""
    root = tmp_path_factory.mktemp("mini-corpus")
    manifest = synth.build_corpus(root, per_class=32, speakers=4, seed=3,
                                  classes=["zeru", "kabiri", "tangira"])
    manifest = split_manifest(manifest, (0.5, 0.25, 0.25), seed=1)
    feature_cfg = FeatureConfig()
    labels = manifest_labels(manifest)
    x_tr, y_tr = split_features(manifest, root, feature_cfg, "mfcc", "train", labels)
    x_val, y_val = split_features(manifest, root, feature_cfg, "mfcc", "val", labels)
    cfg = ModelConfig(arch="lstm", input_shape=x_tr.shape[1:], classes=len(labels),
                      feature_kind="mfcc", lstm_hidden=48)
    tc = TrainConfig(max_epochs=80, early_stop_patience=80, batch_size=16, seed=2)
    artifact, report = train(cfg, tc, (x_tr, y_tr), (x_val, y_val), labels,
                             feature_cfg, clip_len=feature_cfg.sample_rate)
    return {
        "root": root,
        "manifest": manifest,
        "artifact": artifact,
        "labels": labels,
        "feature_cfg": feature_cfg,
        "report": report,
        "val": (x_val, y_val),
        "train": (x_tr, y_tr),
    }
