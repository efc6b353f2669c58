"""Post-training int8 quantization and the integer inference path.

Weights with two or more dimensions get per-tensor affine quantization
(scale = (max-min)/255, zero_point = round(-min/scale) - 128); biases and
the input-normalization vectors stay float32. Activation ranges come from a
calibration batch. Inference multiplies integer-valued matrices exactly
(accumulated in wide floats) and returns to float32 at each layer boundary.
"""

from __future__ import annotations

import logging

import numpy as np

from ..nn import ops
from .artifact import ModelArtifact, TensorEntry

log = logging.getLogger("hakw.deploy")

_EPS_RANGE = 1e-8


class EmptyCalibration(ValueError):
    pass


def affine_params(lo: float, hi: float) -> tuple[float, int]:
    scale = max(hi - lo, _EPS_RANGE) / 255.0
    zero_point = int(round(-lo / scale)) - 128
    return scale, zero_point


def quantize_tensor(w: np.ndarray) -> TensorEntry:
    w64 = np.asarray(w, dtype=np.float64)
    scale, zero_point = affine_params(float(w64.min()), float(w64.max()))
    q = np.clip(np.round(w64 / scale) + zero_point, -128, 127).astype(np.int8)
    return TensorEntry(values=q, scale=scale, zero_point=zero_point)


def dequantize_tensor(entry: TensorEntry) -> np.ndarray:
    return ((entry.values.astype(np.float64) - entry.zero_point) * entry.scale)


def _range(x: np.ndarray) -> list[float]:
    return [float(x.min()), float(x.max())]


def observe_activations(model, x: np.ndarray) -> dict[str, list[float]]:
    """Min/max at every quantized matmul input, measured on a float forward."""
    t = model.transform_input(x).astype(np.float64)
    p = {k: v.astype(np.float64) for k, v in model.params.items()}
    ranges: dict[str, list[float]] = {}
    if model.cfg.arch == "cnn":
        ranges["input"] = _range(t)
        c1, _ = ops.conv2d_forward(t[..., None], p["conv1.w"], p["conv1.b"])
        p1, _ = ops.maxpool2_forward(ops.relu(c1))
        ranges["conv2_in"] = _range(p1)
        c2, _ = ops.conv2d_forward(p1, p["conv2.w"], p["conv2.b"])
        p2, _ = ops.maxpool2_forward(ops.relu(c2))
        ranges["dense1_in"] = _range(p2)
        z1, _ = ops.dense_forward(p2.reshape(len(x), -1), p["dense1.w"], p["dense1.b"])
        ranges["dense2_in"] = _range(ops.relu(z1))
    else:
        ranges["input"] = _range(t)
        h, cache = ops.lstm_forward(t, p["lstm.wx"], p["lstm.wh"], p["lstm.b"])
        # h_prevs covers every state fed to the recurrent matmul, including h0=0
        ranges["hidden"] = _range(np.stack(cache[6] + [h]))
        ranges["dense_in"] = _range(h)
    return ranges


def quantize_int8(artifact: ModelArtifact, calibration: np.ndarray) -> ModelArtifact:
    """Quantize a float artifact using calibration features for activation ranges."""
    calibration = np.asarray(calibration)
    if calibration.size == 0:
        raise EmptyCalibration("calibration batch is empty")
    if artifact.quantized:
        raise ValueError("artifact is already quantized")
    model = artifact.to_model()
    activations = observe_activations(model, calibration)
    tensors: dict[str, TensorEntry] = {}
    for name, entry in artifact.tensors.items():
        if entry.values.ndim >= 2:
            tensors[name] = quantize_tensor(entry.values)
        else:
            tensors[name] = TensorEntry(entry.values.copy())
    quantized = ModelArtifact(artifact.model_cfg, artifact.feature_cfg,
                              list(artifact.labels), tensors, quantized=True,
                              activations=activations, clip_len=artifact.clip_len)
    float_pred = model.forward(calibration).argmax(axis=1)
    int8_pred = QuantizedModel(quantized).forward(calibration).argmax(axis=1)
    agreement = float(np.mean(float_pred == int8_pred))
    if agreement < 0.95:
        log.warning("int8/float argmax agreement %.1f%% on the calibration batch",
                    100 * agreement)
    return quantized


class QuantizedModel:
    """Runs a quantized artifact; mirrors the float forward layer by layer."""

    def __init__(self, artifact: ModelArtifact):
        if not artifact.quantized:
            raise ValueError("artifact is not quantized")
        self.cfg = artifact.model_cfg
        self.labels = list(artifact.labels)
        self.activations = artifact.activations
        self.qw = {k: e for k, e in artifact.tensors.items() if e.quantized}
        self.fw = {k: e.values.astype(np.float64)
                   for k, e in artifact.tensors.items() if not e.quantized}
        self.norm_mean = self.fw["input_norm.mean"]
        self.norm_std = self.fw["input_norm.std"]

    def _quantize_act(self, x: np.ndarray, key: str):
        scale, zp = affine_params(*self.activations[key])
        q = np.clip(np.round(x / scale) + zp, -128, 127)
        return q, scale, zp

    def _qgemm(self, x: np.ndarray, act_key: str, weight: str) -> np.ndarray:
        """int8 x int8 matmul with exact wide accumulation, dequantized out."""
        entry = self.qw[weight]
        xq, sx, zx = self._quantize_act(x, act_key)
        acc = (xq - zx) @ (entry.values.astype(np.float64) - entry.zero_point)
        return acc * (sx * entry.scale)

    def _qconv(self, x: np.ndarray, act_key: str, weight: str) -> np.ndarray:
        entry = self.qw[weight]
        kh, kw, cin, filters = entry.values.shape
        xq, sx, zx = self._quantize_act(x, act_key)
        xqz = xq - zx
        wq = entry.values.astype(np.float64) - entry.zero_point
        b, h, w, _ = x.shape
        oh, ow = h - kh + 1, w - kw + 1
        acc = np.zeros((b, oh, ow, filters))
        for i in range(kh):
            for j in range(kw):
                xs = np.ascontiguousarray(xqz[:, i : i + oh, j : j + ow, :]).reshape(-1, cin)
                acc += (xs @ wq[i, j]).reshape(b, oh, ow, filters)
        return acc * (sx * entry.scale)

    def transform_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1:] != self.cfg.input_shape:
            raise ops.ShapeMismatch(
                f"batch shape {x.shape[1:]} != input shape {self.cfg.input_shape}")
        if self.cfg.input_log:
            x = np.log(np.maximum(x, 1e-10))
        return (x - self.norm_mean) / self.norm_std

    def forward(self, x: np.ndarray) -> np.ndarray:
        t = self.transform_input(x)
        if self.cfg.arch == "cnn":
            c1 = self._qconv(t[..., None], "input", "conv1.w") + self.fw["conv1.b"]
            p1, _ = ops.maxpool2_forward(ops.relu(c1))
            c2 = self._qconv(p1, "conv2_in", "conv2.w") + self.fw["conv2.b"]
            p2, _ = ops.maxpool2_forward(ops.relu(c2))
            z1 = self._qgemm(p2.reshape(len(x), -1), "dense1_in", "dense1.w") + self.fw["dense1.b"]
            logits = self._qgemm(ops.relu(z1), "dense2_in", "dense2.w") + self.fw["dense2.b"]
        else:
            hidden = self.cfg.lstm_hidden
            bsz, steps, dim = t.shape
            zx = self._qgemm(t.reshape(-1, dim), "input", "lstm.wx")
            zx = zx.reshape(bsz, steps, 4 * hidden)
            h = np.zeros((bsz, hidden))
            c = np.zeros((bsz, hidden))
            for step in range(steps):
                z = zx[:, step] + self._qgemm(h, "hidden", "lstm.wh") + self.fw["lstm.b"]
                i = ops.sigmoid(z[:, :hidden])
                f = ops.sigmoid(z[:, hidden : 2 * hidden])
                g = np.tanh(z[:, 2 * hidden : 3 * hidden])
                o = ops.sigmoid(z[:, 3 * hidden :])
                c = f * c + i * g
                h = o * np.tanh(c)
            logits = self._qgemm(h, "dense_in", "dense.w") + self.fw["dense.b"]
        return ops.softmax(logits.astype(np.float32))
