import warnings

import numpy as np
import pytest

from hakw.features import FeatureConfig
from hakw.nn import (Adam, EarlyStopper, EmptyClass, LabelOutOfRange,
                     ModelConfig, NanLoss, ShapeMismatch, TrainConfig,
                     build_model, evaluate, fine_tune, train)
from hakw.nn import ops
from hakw.nn.train import FeatureConfigMismatch, _mean_val_loss
from oracles import cnn_kink_margins, finite_difference_grads, max_relative_error

FEAT = FeatureConfig()

TINY_CNN = ModelConfig(arch="cnn", input_shape=(12, 11), classes=2,
                       feature_kind="mfcc", conv1_filters=2, conv2_filters=3,
                       dense_units=4)
TINY_LSTM = ModelConfig(arch="lstm", input_shape=(4, 3), classes=2,
                        feature_kind="mfcc", lstm_hidden=5)


def make_model(cfg, seed=0, dtype=np.float64):
    model = build_model(cfg, dtype=dtype)
    model.init_params(np.random.default_rng(seed))
    return model


def random_batch(cfg, n=3, seed=1, dtype=np.float64):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, (n, *cfg.input_shape)).astype(dtype)
    y = rng.integers(0, cfg.classes, n)
    return x, y


class TestForward:
    @pytest.mark.parametrize("cfg", [TINY_CNN, TINY_LSTM], ids=["cnn", "lstm"])
    def test_rows_sum_to_one(self, cfg):
        model = make_model(cfg, seed=3)
        x, _ = random_batch(cfg, n=5)
        probs = model.forward(x)
        assert probs.shape == (5, cfg.classes)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    @pytest.mark.parametrize("cfg", [TINY_CNN, TINY_LSTM], ids=["cnn", "lstm"])
    def test_zero_weights_uniform(self, cfg):
        model = make_model(cfg)
        for name in model.params:
            model.params[name] = np.zeros_like(model.params[name])
        x, _ = random_batch(cfg, n=4)
        probs = model.forward(x)
        assert np.allclose(probs, 1.0 / cfg.classes)

    def test_shape_mismatch(self):
        model = make_model(TINY_LSTM)
        with pytest.raises(ShapeMismatch):
            model.forward(np.zeros((2, 7, 3)))

    def test_perfect_prediction_zero_loss(self):
        logits = np.array([[60.0, 0.0, 0.0], [0.0, 60.0, 0.0]])
        loss, dlogits = ops.softmax_xent(logits, np.array([0, 1]))
        assert loss == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(dlogits, 0.0, atol=1e-12)

    def test_golden_tiny_lstm(self):
        """Forward of a fixed 4x2 two-class model, frozen from a scalar-loop run."""
        cfg = ModelConfig(arch="lstm", input_shape=(4, 2), classes=2,
                          feature_kind="mfcc", lstm_hidden=2)
        model = build_model(cfg, dtype=np.float64)
        model.init_params(np.random.default_rng(0))
        model.params["lstm.wx"] = np.array(
            [[0.1, -0.2, 0.3, 0.0, 0.2, -0.1, 0.05, 0.15],
             [-0.3, 0.1, 0.0, 0.2, -0.05, 0.25, 0.1, -0.1]])
        model.params["lstm.wh"] = np.array(
            [[0.05, 0.1, -0.1, 0.2, 0.0, -0.2, 0.15, 0.05],
             [0.2, -0.05, 0.1, 0.0, -0.15, 0.1, 0.0, 0.2]])
        model.params["lstm.b"] = np.array([0.01, -0.02, 1.0, 1.0, 0.03, 0.0, -0.01, 0.02])
        model.params["dense.w"] = np.array([[0.5, -0.4], [-0.3, 0.6]])
        model.params["dense.b"] = np.array([0.05, -0.05])
        x = np.array([[[0.5, -1.0], [1.0, 0.25], [-0.5, 0.75], [0.0, -0.25]]])
        logits, _ = model.forward_logits(x)
        assert np.allclose(logits[0], [0.07528243901912315, -0.07393636594311634],
                           atol=1e-12)
        probs = model.forward(x)
        assert np.allclose(probs[0], [0.5372356353645159, 0.4627643646354841],
                           atol=1e-12)


class TestGradients:
    def _check(self, cfg, train_mode, seed=11, data_seed=None, tol=1e-4):
        model = make_model(cfg, seed=seed)
        x, y = random_batch(cfg, n=3, seed=seed + 1 if data_seed is None else data_seed)
        if cfg.arch == "cnn":
            # keep the evaluation point clear of relu/maxpool kinks, where
            # finite differences stop agreeing with the subgradient
            relu_margin, pool_gap = cnn_kink_margins(model, x, dropout_seed=99)
            assert min(relu_margin, pool_gap) > 1e-3

        def loss_fn():
            rng = np.random.default_rng(99)
            logits, _ = model.forward_logits(x, train=train_mode, rng=rng)
            return ops.softmax_xent(logits, y)[0]

        rng = np.random.default_rng(99)
        logits, cache = model.forward_logits(x, train=train_mode, rng=rng)
        _, dlogits = ops.softmax_xent(logits, y)
        analytic = model.backward(dlogits, cache)
        numeric = finite_difference_grads(loss_fn, model.params)
        assert max_relative_error(analytic, numeric) < tol

    def test_tiny_cnn_eval_mode(self):
        self._check(TINY_CNN, train_mode=False, seed=0, data_seed=100)

    def test_tiny_cnn_with_dropout(self):
        self._check(TINY_CNN, train_mode=True, seed=0, data_seed=100)

    def test_tiny_lstm(self):
        self._check(TINY_LSTM, train_mode=False)

    def test_zero_weights_bias_gradient_closed_form(self):
        model = make_model(TINY_LSTM)
        for name in model.params:
            model.params[name] = np.zeros_like(model.params[name])
        x = np.zeros((4, 4, 3))
        y = np.array([0, 1, 0, 0])
        logits, cache = model.forward_logits(x)
        _, dlogits = ops.softmax_xent(logits, y)
        grads = model.backward(dlogits, cache)
        onehot = np.eye(2)[y]
        expected = (np.full((4, 2), 0.5) - onehot).mean(axis=0)
        assert np.allclose(grads["dense.b"], expected, atol=1e-12)

    def test_conv_op_alone(self):
        rng = np.random.default_rng(5)
        x = rng.normal(0, 1, (2, 6, 5, 2))
        w = rng.normal(0, 1, (3, 3, 2, 4))
        b = rng.normal(0, 1, 4)
        weight = rng.normal(0, 1, (2, 4, 3, 4))

        def loss_fn():
            y, _ = ops.conv2d_forward(x, w, b)
            return float((y * weight).sum())

        y, cache = ops.conv2d_forward(x, w, b)
        _, dw, db = ops.conv2d_backward(weight, cache)
        numeric = finite_difference_grads(loss_fn, {"w": w, "b": b})
        assert max_relative_error({"w": dw, "b": db}, numeric) < 1e-6

    def test_maxpool_tie_first_index_wins(self):
        x = np.zeros((1, 2, 2, 1))
        x[0, :, :, 0] = [[1.0, 1.0], [1.0, 1.0]]  # four-way tie
        y, cache = ops.maxpool2_forward(x)
        assert y[0, 0, 0, 0] == 1.0
        dx = ops.maxpool2_backward(np.ones_like(y), cache)
        assert dx[0, 0, 0, 0] == 1.0
        assert dx.sum() == 1.0  # all gradient lands on the first position

    def test_lstm_cell_input_gradient(self):
        rng = np.random.default_rng(8)
        x = rng.normal(0, 1, (2, 3, 4))
        wx = rng.normal(0, 0.5, (4, 12))
        wh = rng.normal(0, 0.5, (3, 12))
        b = rng.normal(0, 0.1, 12)
        weight = rng.normal(0, 1, (2, 3))

        def loss_fn():
            h, _ = ops.lstm_forward(x, wx, wh, b)
            return float((h * weight).sum())

        h, cache = ops.lstm_forward(x, wx, wh, b)
        dx, dwx, dwh, db = ops.lstm_backward(weight, cache)
        numeric = finite_difference_grads(loss_fn, {"x": x, "wx": wx, "wh": wh, "b": b})
        analytic = {"x": dx, "wx": dwx, "wh": dwh, "b": db}
        assert max_relative_error(analytic, numeric) < 1e-6


class TestEarlyStopping:
    def test_scripted_losses_patience_one(self):
        stopper = EarlyStopper(patience=1)
        assert stopper.update(1, 1.0) is False   # improves
        assert stopper.update(2, 1.1) is False   # one stale epoch allowed
        assert stopper.update(3, 1.2) is True    # stops at epoch 3
        assert stopper.best_epoch == 1

    def test_recovery_resets_patience(self):
        stopper = EarlyStopper(patience=2)
        for epoch, loss in enumerate([1.0, 1.1, 0.9, 1.0, 1.0], start=1):
            stopped = stopper.update(epoch, loss)
        assert stopped is False
        assert stopper.best_epoch == 3


def toy_dataset(n=20, classes=2, shape=(4, 3), separation=1.0, seed=0):
    rng = np.random.default_rng(seed)
    means = rng.normal(0, separation, (classes, *shape))
    y = np.arange(n) % classes
    x = means[y] + rng.normal(0, 0.05, (n, *shape))
    return x.astype(np.float32), y.astype(np.int64)


class TestTrain:
    def test_overfits_separable_toy(self):
        x, y = toy_dataset()
        cfg = ModelConfig(arch="lstm", input_shape=(4, 3), classes=2,
                          feature_kind="mfcc", lstm_hidden=8)
        tc = TrainConfig(max_epochs=200, early_stop_patience=200, batch_size=8, seed=1)
        artifact, report = train(cfg, tc, (x, y), (x, y), ["a", "b"], FEAT)
        assert max(report.train_accuracy) == 1.0
        assert report.stopped_epoch <= 200

    def test_seed_determinism_bitwise(self):
        x, y = toy_dataset(n=24)
        cfg = ModelConfig(arch="lstm", input_shape=(4, 3), classes=2,
                          feature_kind="mfcc", lstm_hidden=6)
        tc = TrainConfig(max_epochs=3, batch_size=8, seed=42)
        a, _ = train(cfg, tc, (x, y), (x, y), ["a", "b"], FEAT)
        b, _ = train(cfg, tc, (x, y), (x, y), ["a", "b"], FEAT)
        assert a.to_bytes() == b.to_bytes()

    def test_different_seeds_differ(self):
        x, y = toy_dataset(n=24)
        cfg = ModelConfig(arch="lstm", input_shape=(4, 3), classes=2,
                          feature_kind="mfcc", lstm_hidden=6)
        a, _ = train(cfg, TrainConfig(max_epochs=2, seed=1), (x, y), (x, y), ["a", "b"], FEAT)
        b, _ = train(cfg, TrainConfig(max_epochs=2, seed=2), (x, y), (x, y), ["a", "b"], FEAT)
        assert a.to_bytes() != b.to_bytes()

    def test_empty_class_rejected(self):
        x, y = toy_dataset()
        y = np.zeros_like(y)  # class 1 vanishes
        cfg = ModelConfig(arch="lstm", input_shape=(4, 3), classes=2,
                          feature_kind="mfcc", lstm_hidden=4)
        with pytest.raises(EmptyClass):
            train(cfg, TrainConfig(max_epochs=1), (x, y), (x, y), ["a", "b"], FEAT)

    def test_early_stop_restores_best_epoch(self):
        x, y = toy_dataset(n=16)
        rng = np.random.default_rng(3)
        x_val = x + rng.normal(0, 0.3, x.shape).astype(np.float32)
        cfg = ModelConfig(arch="lstm", input_shape=(4, 3), classes=2,
                          feature_kind="mfcc", lstm_hidden=4)
        tc = TrainConfig(max_epochs=40, early_stop_patience=3, seed=5, batch_size=8)
        artifact, report = train(cfg, tc, (x, y), (x_val, y), ["a", "b"], FEAT)
        assert report.best_epoch <= report.stopped_epoch
        assert report.best_val_accuracy == report.val_accuracy[report.best_epoch - 1]
        # restored weights really are the best-epoch weights
        model = artifact.to_model()
        val_loss, _ = _mean_val_loss(model, x_val, y)
        assert val_loss == pytest.approx(min(report.val_loss), rel=1e-5)

    def test_nan_loss_aborts(self):
        x, y = toy_dataset(n=8)
        x[0, 0, 0] = np.nan
        cfg = ModelConfig(arch="lstm", input_shape=(4, 3), classes=2,
                          feature_kind="mfcc", lstm_hidden=4)
        with pytest.raises(NanLoss):
            train(cfg, TrainConfig(max_epochs=1, seed=0), (x, y), (x, y),
                  ["a", "b"], FEAT)


class TestEvaluate:
    def test_perfect_predictions(self):
        x, y = toy_dataset(n=12)
        cfg = ModelConfig(arch="lstm", input_shape=(4, 3), classes=2,
                          feature_kind="mfcc", lstm_hidden=8)
        tc = TrainConfig(max_epochs=150, early_stop_patience=150, batch_size=4, seed=1)
        artifact, _ = train(cfg, tc, (x, y), (x, y), ["a", "b"], FEAT)
        report = evaluate(artifact.to_model(), x, y)
        assert report.accuracy == 1.0
        cm = np.array(report.confusion)
        assert cm.trace() == len(y)
        assert cm.sum() == len(y)

    def test_constant_predictor_balanced(self):
        cfg = ModelConfig(arch="lstm", input_shape=(4, 3), classes=4,
                          feature_kind="mfcc", lstm_hidden=4)
        model = make_model(cfg, dtype=np.float32)
        for name in model.params:
            model.params[name] = np.zeros_like(model.params[name])
        x = np.random.default_rng(0).normal(0, 1, (40, 4, 3)).astype(np.float32)
        y = np.arange(40) % 4
        report = evaluate(model, x, y)
        # zero weights -> uniform probabilities -> argmax ties to class 0
        assert report.accuracy == pytest.approx(0.25)
        assert all(row[0] == 10 for row in report.confusion)

    def test_confusion_row_sums(self):
        x, y = toy_dataset(n=30, classes=3)
        cfg = ModelConfig(arch="lstm", input_shape=(4, 3), classes=3,
                          feature_kind="mfcc", lstm_hidden=6)
        artifact, _ = train(cfg, TrainConfig(max_epochs=2, seed=0), (x, y), (x, y),
                            ["a", "b", "c"], FEAT)
        report = evaluate(artifact.to_model(), x, y)
        cm = np.array(report.confusion)
        assert np.array_equal(cm.sum(axis=1), np.bincount(y, minlength=3))

    def test_label_out_of_range(self):
        cfg = ModelConfig(arch="lstm", input_shape=(4, 3), classes=2,
                          feature_kind="mfcc", lstm_hidden=4)
        model = make_model(cfg, dtype=np.float32)
        x = np.zeros((3, 4, 3), dtype=np.float32)
        with pytest.raises(LabelOutOfRange):
            evaluate(model, x, np.array([0, 1, 2]))

    def test_accuracy_invariant_under_logit_scaling(self):
        cfg = ModelConfig(arch="lstm", input_shape=(4, 3), classes=2,
                          feature_kind="mfcc", lstm_hidden=4)
        model = make_model(cfg, dtype=np.float32)
        x, y = toy_dataset(n=16)
        base = evaluate(model, x, y).accuracy
        model.params["dense.w"] = model.params["dense.w"] * 7.5
        model.params["dense.b"] = model.params["dense.b"] * 7.5
        assert evaluate(model, x, y).accuracy == base


class TestFineTune:
    def _pretrained(self, classes=3, seed=0):
        x, y = toy_dataset(n=30, classes=classes, seed=seed)
        cfg = ModelConfig(arch="lstm", input_shape=(4, 3), classes=classes,
                          feature_kind="mfcc", lstm_hidden=6)
        labels = [f"c{i}" for i in range(classes)]
        artifact, _ = train(cfg, TrainConfig(max_epochs=3, seed=seed), (x, y),
                            (x, y), labels, FEAT)
        return artifact, x, y, labels

    def test_zero_epochs_identity(self):
        artifact, x, y, labels = self._pretrained()
        tuned, _ = fine_tune(artifact, TrainConfig(max_epochs=5, seed=1),
                             (x, y), (x, y), labels, epochs=0)
        assert tuned.to_bytes() == artifact.to_bytes()

    def test_new_labels_reinitialize_head(self):
        artifact, x, y, _ = self._pretrained(classes=3)
        x2, y2 = toy_dataset(n=12, classes=2, seed=9)
        tc = TrainConfig(max_epochs=5, seed=2, freeze_feature_layers=True)
        tuned, _ = fine_tune(artifact, tc, (x2, y2), (x2, y2), ["x", "y"])
        assert tuned.model_cfg.classes == 2
        assert tuned.tensors["dense.w"].values.shape == (6, 2)
        # frozen lower layers stay byte-equal to the pretrained ones
        for name in ("lstm.wx", "lstm.wh", "lstm.b"):
            assert tuned.tensors[name].values.tobytes() == \
                artifact.tensors[name].values.tobytes()

    def test_feature_config_mismatch(self):
        artifact, x, y, labels = self._pretrained()
        other = FeatureConfig(n_mels=32)
        with pytest.raises(FeatureConfigMismatch):
            fine_tune(artifact, TrainConfig(max_epochs=1), (x, y), (x, y),
                      labels, feature_cfg=other)

    def test_pretrain_then_finetune_vs_scratch(self):
        """Paired-run comparison on held-out classes under a 5-epoch budget.

        A worse fine-tuned result is recorded, not failed: small-budget
        transfer is allowed to fall short.
        """
        rng = np.random.default_rng(7)
        means = rng.normal(0, 1.0, (6, 4, 3))

        def sample(cls, n, seed):
            r = np.random.default_rng(seed)
            x = means[np.tile(np.array(cls), n)] + r.normal(0, 0.4, (len(cls) * n, 4, 3))
            return x.astype(np.float32), np.tile(np.arange(len(cls)), n)

        x_pre, y_pre = sample([0, 1, 2, 3], 20, seed=1)
        cfg = ModelConfig(arch="lstm", input_shape=(4, 3), classes=4,
                          feature_kind="mfcc", lstm_hidden=8)
        pre, _ = train(cfg, TrainConfig(max_epochs=30, seed=3), (x_pre, y_pre),
                       (x_pre, y_pre), ["a", "b", "c", "d"], FEAT)
        x_tr, y_tr = sample([4, 5], 8, seed=2)
        x_val, y_val = sample([4, 5], 10, seed=3)
        budget = TrainConfig(max_epochs=5, early_stop_patience=5, seed=4)
        _, ft_report = fine_tune(pre, budget, (x_tr, y_tr), (x_val, y_val), ["x", "y"])
        scratch_cfg = ModelConfig(arch="lstm", input_shape=(4, 3), classes=2,
                                  feature_kind="mfcc", lstm_hidden=8)
        _, sc_report = train(scratch_cfg, budget, (x_tr, y_tr), (x_val, y_val),
                             ["x", "y"], FEAT)
        ft_acc, sc_acc = ft_report.best_val_accuracy, sc_report.best_val_accuracy
        if ft_acc < sc_acc:
            warnings.warn(f"fine-tuned {ft_acc:.3f} < from-scratch {sc_acc:.3f} "
                          "under the 5-epoch budget (recorded, not failed)")
        assert ft_report.stopped_epoch <= 5
        assert sc_report.stopped_epoch <= 5


class TestAdam:
    def test_frozen_params_untouched(self):
        params = {"a": np.ones(3, dtype=np.float32), "b": np.ones(3, dtype=np.float32)}
        adam = Adam(params, TrainConfig(), frozen={"b"})
        adam.step({"a": np.full(3, 0.5, dtype=np.float32),
                   "b": np.full(3, 0.5, dtype=np.float32)})
        assert not np.array_equal(params["a"], np.ones(3))
        assert np.array_equal(params["b"], np.ones(3))
