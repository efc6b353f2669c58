"""The two classifier architectures and their configuration.

CNN: conv(3x3) -> relu -> maxpool(2x2), twice, then dropout, a relu dense
layer, dropout again, and the class layer. LSTM: one recurrent layer over the
feature frames, final hidden state into the class layer. Both take a
(batch, frames, coeffs) feature batch and emit logits; softmax lives in the
loss / predict helpers.

Models own a fixed input transform: optional elementwise log (spectrograms
are raw power) and a per-coefficient affine normalization fitted once on the
training set and carried in the artifact.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import ops
from .ops import ShapeMismatch

_NORM_STD_FLOOR = 1e-6


@dataclass
class ModelConfig:
    arch: str = "lstm"
    input_shape: tuple[int, int] = (98, 13)
    classes: int = 2
    feature_kind: str = ""
    conv1_filters: int = 32
    conv2_filters: int = 64
    kernel: int = 3
    dense_units: int = 128
    dropout1: float = 0.25
    dropout2: float = 0.5
    lstm_hidden: int = 128
    input_log: bool | None = None

    def __post_init__(self) -> None:
        if self.arch not in ("cnn", "lstm"):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.classes < 2:
            raise ValueError("need at least 2 classes")
        if not self.feature_kind:
            self.feature_kind = "spectrogram" if self.arch == "cnn" else "mfcc"
        if self.input_log is None:
            self.input_log = self.feature_kind == "spectrogram"
        self.input_shape = tuple(self.input_shape)

    def to_json(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class BaseModel:
    """Shared parameter plumbing; subclasses implement the compute graph."""

    def __init__(self, cfg: ModelConfig, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        frames, coeffs = cfg.input_shape
        self.norm_mean = np.zeros(coeffs, dtype=self.dtype)
        self.norm_std = np.ones(coeffs, dtype=self.dtype)

    head_params: tuple[str, ...] = ()

    def param_names(self) -> list[str]:
        return list(self.params)

    def _glorot(self, rng: np.random.Generator, shape, fan_in, fan_out) -> np.ndarray:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape).astype(self.dtype)

    def fit_input_norm(self, x: np.ndarray) -> None:
        """Fit the per-coefficient normalization on a (N, frames, coeffs) batch."""
        t = self._pre_norm(np.asarray(x, dtype=self.dtype))
        mean = t.mean(axis=(0, 1))
        std = np.maximum(t.std(axis=(0, 1)), _NORM_STD_FLOOR)
        self.norm_mean = mean.astype(self.dtype)
        self.norm_std = std.astype(self.dtype)

    def _pre_norm(self, x: np.ndarray) -> np.ndarray:
        if self.cfg.input_log:
            return np.log(np.maximum(x, 1e-10))
        return x

    def transform_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 3 or x.shape[1:] != self.cfg.input_shape:
            raise ShapeMismatch(
                f"batch shape {x.shape[1:]} != input shape {self.cfg.input_shape}")
        return (self._pre_norm(x) - self.norm_mean) / self.norm_std

    def forward_logits(self, x: np.ndarray, train: bool = False,
                       rng: np.random.Generator | None = None):
        raise NotImplementedError

    def backward(self, dlogits: np.ndarray, cache) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        """Class probabilities, one row per sample, rows summing to 1."""
        logits, _ = self.forward_logits(x, train=train, rng=rng)
        return ops.softmax(logits)

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = dict(self.params)
        out["input_norm.mean"] = self.norm_mean
        out["input_norm.std"] = self.norm_std
        return out

    def load_state(self, tensors: dict[str, np.ndarray]) -> None:
        for name in self.params:
            src = tensors[name]
            if src.shape != self.params[name].shape:
                raise ShapeMismatch(f"tensor {name}: {src.shape} != {self.params[name].shape}")
            self.params[name] = src.astype(self.dtype)
        self.norm_mean = tensors["input_norm.mean"].astype(self.dtype)
        self.norm_std = tensors["input_norm.std"].astype(self.dtype)


class CnnModel(BaseModel):
    head_params = ("dense2.w", "dense2.b")

    def __init__(self, cfg: ModelConfig, dtype=np.float32):
        super().__init__(cfg, dtype)
        frames, coeffs = cfg.input_shape
        k = cfg.kernel
        h1, w1 = frames - k + 1, coeffs - k + 1
        h2, w2 = h1 // 2, w1 // 2
        h3, w3 = h2 - k + 1, w2 - k + 1
        h4, w4 = h3 // 2, w3 // 2
        if min(h1, w1, h3, w3, h4, w4) < 1:
            raise ShapeMismatch(f"input {cfg.input_shape} too small for the CNN stack")
        self.flat_dim = h4 * w4 * cfg.conv2_filters

    def init_params(self, rng: np.random.Generator) -> None:
        cfg = self.cfg
        k = cfg.kernel
        self.params = {
            "conv1.w": self._glorot(rng, (k, k, 1, cfg.conv1_filters),
                                    k * k, k * k * cfg.conv1_filters),
            "conv1.b": np.zeros(cfg.conv1_filters, dtype=self.dtype),
            "conv2.w": self._glorot(rng, (k, k, cfg.conv1_filters, cfg.conv2_filters),
                                    k * k * cfg.conv1_filters, k * k * cfg.conv2_filters),
            "conv2.b": np.zeros(cfg.conv2_filters, dtype=self.dtype),
            "dense1.w": self._glorot(rng, (self.flat_dim, cfg.dense_units),
                                     self.flat_dim, cfg.dense_units),
            "dense1.b": np.zeros(cfg.dense_units, dtype=self.dtype),
            "dense2.w": self._glorot(rng, (cfg.dense_units, cfg.classes),
                                     cfg.dense_units, cfg.classes),
            "dense2.b": np.zeros(cfg.classes, dtype=self.dtype),
        }

    def forward_logits(self, x, train=False, rng=None):
        p = self.params
        t = self.transform_input(x)[..., None]
        c1, cache1 = ops.conv2d_forward(t, p["conv1.w"], p["conv1.b"])
        r1 = ops.relu(c1)
        p1, pcache1 = ops.maxpool2_forward(r1)
        c2, cache2 = ops.conv2d_forward(p1, p["conv2.w"], p["conv2.b"])
        r2 = ops.relu(c2)
        p2, pcache2 = ops.maxpool2_forward(r2)
        d1, mask1 = ops.dropout_forward(p2, self.cfg.dropout1, train, rng)
        flat = d1.reshape(len(x), -1)
        z1, dcache1 = ops.dense_forward(flat, p["dense1.w"], p["dense1.b"])
        a1 = ops.relu(z1)
        d2, mask2 = ops.dropout_forward(a1, self.cfg.dropout2, train, rng)
        logits, dcache2 = ops.dense_forward(d2, p["dense2.w"], p["dense2.b"])
        cache = (cache1, c1, pcache1, cache2, c2, pcache2, mask1, d1.shape,
                 dcache1, z1, mask2, dcache2)
        return logits, cache

    def backward(self, dlogits, cache):
        (cache1, c1, pcache1, cache2, c2, pcache2, mask1, d1_shape,
         dcache1, z1, mask2, dcache2) = cache
        dd2, dw_d2, db_d2 = ops.dense_backward(dlogits, dcache2)
        da1 = ops.dropout_backward(dd2, mask2)
        dz1 = da1 * (z1 > 0)
        dflat, dw_d1, db_d1 = ops.dense_backward(dz1, dcache1)
        dd1 = ops.dropout_backward(dflat.reshape(d1_shape), mask1)
        dr2 = ops.maxpool2_backward(dd1, pcache2)
        dc2 = dr2 * (c2 > 0)
        dp1, dw_c2, db_c2 = ops.conv2d_backward(dc2, cache2)
        dr1 = ops.maxpool2_backward(dp1, pcache1)
        dc1 = dr1 * (c1 > 0)
        _, dw_c1, db_c1 = ops.conv2d_backward(dc1, cache1)
        return {
            "conv1.w": dw_c1, "conv1.b": db_c1,
            "conv2.w": dw_c2, "conv2.b": db_c2,
            "dense1.w": dw_d1, "dense1.b": db_d1,
            "dense2.w": dw_d2, "dense2.b": db_d2,
        }


class LstmModel(BaseModel):
    head_params = ("dense.w", "dense.b")

    def init_params(self, rng: np.random.Generator) -> None:
        cfg = self.cfg
        dim = cfg.input_shape[1]
        hidden = cfg.lstm_hidden
        b = np.zeros(4 * hidden, dtype=self.dtype)
        b[hidden : 2 * hidden] = 1.0  # forget-gate bias keeps early memory open
        self.params = {
            "lstm.wx": self._glorot(rng, (dim, 4 * hidden), dim, 4 * hidden),
            "lstm.wh": self._glorot(rng, (hidden, 4 * hidden), hidden, 4 * hidden),
            "lstm.b": b,
            "dense.w": self._glorot(rng, (hidden, cfg.classes), hidden, cfg.classes),
            "dense.b": np.zeros(cfg.classes, dtype=self.dtype),
        }

    def forward_logits(self, x, train=False, rng=None):
        p = self.params
        t = self.transform_input(x)
        h, lcache = ops.lstm_forward(t, p["lstm.wx"], p["lstm.wh"], p["lstm.b"])
        logits, dcache = ops.dense_forward(h, p["dense.w"], p["dense.b"])
        return logits, (lcache, dcache)

    def backward(self, dlogits, cache):
        lcache, dcache = cache
        dh, dw_d, db_d = ops.dense_backward(dlogits, dcache)
        _, dwx, dwh, db = ops.lstm_backward(dh, lcache)
        return {
            "lstm.wx": dwx, "lstm.wh": dwh, "lstm.b": db,
            "dense.w": dw_d, "dense.b": db_d,
        }


def build_model(cfg: ModelConfig, dtype=np.float32) -> BaseModel:
    model = CnnModel(cfg, dtype) if cfg.arch == "cnn" else LstmModel(cfg, dtype)
    return model
