"""Training with Adam, early stopping on validation loss, and fine-tuning.

A run is a pure function of (configs, data, seed): weight init, batch order,
and dropout masks all derive from the seed, so one seed reproduces one
artifact bit for bit.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import ops
from .model import BaseModel, ModelConfig, build_model

# Validation accuracies from the full-scale corpus experiments (MSWC, locally
# collected, combined, and fine-tuned-on-local). Kept as report metadata for
# comparison; they need the full datasets to reproduce.
REFERENCE_VAL_ACCURACY = {
    "mswc": 0.781,
    "local": 0.368,
    "combined": 0.718,
    "finetuned_local": 0.367,
}


class NanLoss(ArithmeticError):
    """Training hit a non-finite loss; aborted with diagnostics."""


class EmptyClass(ValueError):
    pass


class LabelOutOfRange(ValueError):
    pass


class FeatureConfigMismatch(ValueError):
    pass


@dataclass
class TrainConfig:
    max_epochs: int = 150
    early_stop_patience: int = 10
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    finetune_lr: float = 1e-4
    freeze_feature_layers: bool = False

    def __post_init__(self) -> None:
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    best_val_accuracy: float = 0.0
    confusion: list[list[int]] = field(default_factory=list)
    reference: dict = field(default_factory=lambda: dict(REFERENCE_VAL_ACCURACY))

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class EvalReport:
    accuracy: float
    confusion: list[list[int]]
    total: int

    def to_json(self) -> dict:
        return asdict(self)


class EarlyStopper:
    """Stop once validation loss has not improved for more than `patience` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.stale = 0
            return False
        self.stale += 1
        return self.stale > self.patience


class Adam:
    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig,
                 lr: float | None = None, frozen: set[str] | None = None):
        self.params = params
        self.lr = cfg.learning_rate if lr is None else lr
        self.b1, self.b2, self.eps = cfg.beta1, cfg.beta2, cfg.epsilon
        self.frozen = frozen or set()
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items() if k not in self.frozen}
        self.v = {k: np.zeros_like(v) for k, v in params.items() if k not in self.frozen}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.b1 ** self.t
        b2t = 1.0 - self.b2 ** self.t
        for name in sorted(self.m):
            g = grads[name]
            self.m[name] = self.b1 * self.m[name] + (1.0 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1.0 - self.b2) * g * g
            step = self.lr * (self.m[name] / b1t) / (np.sqrt(self.v[name] / b2t) + self.eps)
            self.params[name] -= step.astype(self.params[name].dtype)


def predict_probs(model: BaseModel, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    rows = [model.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
    return np.concatenate(rows, axis=0)


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, classes: int) -> np.ndarray:
    cm = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def evaluate(model: BaseModel, x: np.ndarray, y: np.ndarray) -> EvalReport:
    """Accuracy and confusion counts; argmax prediction, ties to the lowest class."""
    y = np.asarray(y)
    classes = model.cfg.classes
    if y.min(initial=0) < 0 or y.max(initial=0) >= classes:
        raise LabelOutOfRange(f"labels outside [0, {classes})")
    probs = predict_probs(model, x)
    pred = probs.argmax(axis=1)
    cm = confusion_matrix(y, pred, classes)
    return EvalReport(accuracy=float(np.mean(pred == y)), confusion=cm.tolist(),
                      total=int(len(y)))


def _mean_val_loss(model: BaseModel, x: np.ndarray, y: np.ndarray,
                   batch_size: int = 256) -> tuple[float, float]:
    losses, correct = [], 0
    for i in range(0, len(x), batch_size):
        xb, yb = x[i : i + batch_size], y[i : i + batch_size]
        logits, _ = model.forward_logits(xb, train=False)
        loss, _ = ops.softmax_xent(logits, yb)
        losses.append(loss * len(xb))
        correct += int(np.sum(logits.argmax(axis=1) == yb))
    return float(np.sum(losses) / len(x)), correct / len(x)


def _fit(model: BaseModel, train_cfg: TrainConfig, lr: float,
         train_data, val_data, frozen: set[str] | None = None) -> TrainReport:
    x_tr, y_tr = np.asarray(train_data[0]), np.asarray(train_data[1])
    x_val, y_val = np.asarray(val_data[0]), np.asarray(val_data[1])
    classes = model.cfg.classes
    counts = np.bincount(y_tr, minlength=classes)
    if counts.min() == 0:
        missing = [int(i) for i in np.nonzero(counts == 0)[0]]
        raise EmptyClass(f"no train samples for classes {missing}")
    adam = Adam(model.params, train_cfg, lr=lr, frozen=frozen)
    stopper = EarlyStopper(train_cfg.early_stop_patience)
    report = TrainReport()
    best_state = {k: v.copy() for k, v in model.state_tensors().items()}
    for epoch in range(1, train_cfg.max_epochs + 1):
        perm = np.random.default_rng([train_cfg.seed, epoch]).permutation(len(x_tr))
        epoch_loss = 0.0
        epoch_correct = 0
        for b, start in enumerate(range(0, len(perm), train_cfg.batch_size)):
            batch = perm[start : start + train_cfg.batch_size]
            rng = np.random.default_rng([train_cfg.seed, epoch, b])
            logits, cache = model.forward_logits(x_tr[batch], train=True, rng=rng)
            loss, dlogits = ops.softmax_xent(logits, y_tr[batch])
            if not np.isfinite(loss):
                raise NanLoss(f"non-finite loss at epoch {epoch} batch {b}")
            grads = model.backward(dlogits, cache)
            adam.step(grads)
            epoch_loss += loss * len(batch)
            epoch_correct += int(np.sum(logits.argmax(axis=1) == y_tr[batch]))
        val_loss, val_acc = _mean_val_loss(model, x_val, y_val)
        if not np.isfinite(val_loss):
            raise NanLoss(f"non-finite validation loss at epoch {epoch}")
        report.train_loss.append(epoch_loss / len(perm))
        report.train_accuracy.append(epoch_correct / len(perm))
        report.val_loss.append(val_loss)
        report.val_accuracy.append(val_acc)
        improved = val_loss < stopper.best_loss
        should_stop = stopper.update(epoch, val_loss)
        if improved:
            best_state = {k: v.copy() for k, v in model.state_tensors().items()}
        report.stopped_epoch = epoch
        if should_stop:
            break
    model.load_state(best_state)
    report.best_epoch = stopper.best_epoch
    report.best_val_accuracy = report.val_accuracy[stopper.best_epoch - 1]
    report.confusion = evaluate(model, x_val, y_val).confusion
    return report


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, train_data, val_data,
          labels: list[str], feature_cfg, clip_len: int = 0):
    """Train from scratch; returns (ModelArtifact, TrainReport)."""
    from ..deploy.artifact import ModelArtifact  # shared checkpoint format

    if len(labels) != model_cfg.classes:
        raise ValueError(f"{len(labels)} labels for {model_cfg.classes} classes")
    model = build_model(model_cfg)
    model.init_params(np.random.default_rng([train_cfg.seed, 17]))
    model.fit_input_norm(np.asarray(train_data[0]))
    report = _fit(model, train_cfg, train_cfg.learning_rate, train_data, val_data)
    return ModelArtifact.from_model(model, feature_cfg, labels, clip_len), report


def fine_tune(pretrained, train_cfg: TrainConfig, train_data, val_data,
              labels: list[str], feature_cfg=None, epochs: int | None = None):
    """Continue training a float artifact on new data at the fine-tune rate.

    A different label list reinitializes the output layer to the new class
    count; all other weights load from the artifact. With
    freeze_feature_layers set, only the output layer trains. epochs=0 skips
    training entirely and returns the assembled artifact as-is.
    """
    from ..deploy.artifact import ModelArtifact

    if pretrained.quantized:
        raise ValueError("fine-tuning needs a float artifact")
    if feature_cfg is not None and feature_cfg != pretrained.feature_cfg:
        raise FeatureConfigMismatch("new data was featurized with a different config")
    same_labels = list(labels) == list(pretrained.labels)
    cfg = ModelConfig.from_json({**pretrained.model_cfg.to_json(),
                                 "classes": len(labels)})
    model = build_model(cfg)
    model.init_params(np.random.default_rng([train_cfg.seed, 23]))
    tensors = {name: entry.values for name, entry in pretrained.tensors.items()}
    if same_labels:
        model.load_state(tensors)
    else:
        lower = {k: v for k, v in tensors.items() if k not in model.head_params}
        lower.update({name: model.params[name].copy() for name in model.head_params})
        model.load_state(lower)
    frozen = None
    if train_cfg.freeze_feature_layers:
        frozen = {name for name in model.params if name not in model.head_params}
    run_epochs = train_cfg.max_epochs if epochs is None else epochs
    if run_epochs == 0:
        return ModelArtifact.from_model(model, pretrained.feature_cfg, labels,
                                        pretrained.clip_len), TrainReport()
    fit_cfg = TrainConfig.from_json({**train_cfg.to_json(), "max_epochs": run_epochs})
    report = _fit(model, fit_cfg, train_cfg.finetune_lr, train_data, val_data,
                  frozen=frozen)
    return ModelArtifact.from_model(model, pretrained.feature_cfg, labels,
                                    pretrained.clip_len), report
