"""Single-file model checkpoint format.

Layout: magic "HAKW", u32 version, u64 header length, UTF-8 JSON header,
then the raw tensor blobs. The header carries the architecture and feature
configs, the label list, and a tensor directory (name, shape, dtype, offset,
plus scale/zero_point for int8 entries) that must match the blob section
exactly. Serialization is canonical, so save -> load -> save is byte-stable.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..features import FeatureConfig
from ..nn.model import BaseModel, ModelConfig, build_model

MAGIC = b"HAKW"
VERSION = 1


class BadMagic(ValueError):
    pass


class VersionUnsupported(ValueError):
    pass


class CorruptDirectory(ValueError):
    """Tensor directory and blob section disagree, or the header is unreadable."""


@dataclass
class TensorEntry:
    """One named blob: float32 weights, or int8 values with affine parameters."""

    values: np.ndarray
    scale: float | None = None
    zero_point: int | None = None

    @property
    def quantized(self) -> bool:
        return self.scale is not None


@dataclass
class ModelArtifact:
    model_cfg: ModelConfig
    feature_cfg: FeatureConfig
    labels: list[str]
    tensors: dict[str, TensorEntry]
    quantized: bool = False
    activations: dict[str, list[float]] = field(default_factory=dict)
    clip_len: int = 0  # samples per canonicalized clip at training time

    def __post_init__(self) -> None:
        if len(self.labels) != self.model_cfg.classes:
            raise ValueError(
                f"{len(self.labels)} labels for {self.model_cfg.classes} classes")
        if not self.clip_len:
            self.clip_len = self.feature_cfg.samples_for_frames(
                self.model_cfg.input_shape[0])

    @classmethod
    def from_model(cls, model: BaseModel, feature_cfg: FeatureConfig,
                   labels: list[str], clip_len: int = 0) -> "ModelArtifact":
        tensors = {name: TensorEntry(values.astype("<f4"))
                   for name, values in model.state_tensors().items()}
        return cls(model.cfg, feature_cfg, list(labels), tensors,
                   clip_len=clip_len)

    def to_model(self, dtype=np.float32) -> BaseModel:
        if self.quantized:
            raise ValueError("quantized artifact: use deploy.quantize.QuantizedModel")
        model = build_model(self.model_cfg, dtype=dtype)
        model.init_params(np.random.default_rng(0))
        model.load_state({name: e.values for name, e in self.tensors.items()})
        return model

    def to_bytes(self) -> bytes:
        directory = []
        blobs = []
        offset = 0
        for name, entry in self.tensors.items():
            if entry.quantized:
                raw = entry.values.astype(np.int8).tobytes()
                dtype = "int8"
            else:
                raw = entry.values.astype("<f4").tobytes()
                dtype = "float32"
            item = {"name": name, "dtype": dtype,
                    "shape": list(entry.values.shape),
                    "offset": offset, "nbytes": len(raw)}
            if entry.quantized:
                item["scale"] = float(entry.scale)
                item["zero_point"] = int(entry.zero_point)
            directory.append(item)
            blobs.append(raw)
            offset += len(raw)
        header = {
            "arch": self.model_cfg.arch,
            "quantized": self.quantized,
            "clip_len": self.clip_len,
            "model": self.model_cfg.to_json(),
            "features": self.feature_cfg.to_json(),
            "labels": self.labels,
            "activations": self.activations,
            "tensors": directory,
        }
        head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        return (MAGIC + struct.pack("<I", VERSION) + struct.pack("<Q", len(head))
                + head + b"".join(blobs))

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelArtifact":
        if len(data) < 4 or data[:4] != MAGIC:
            raise BadMagic("not a model artifact (bad magic)")
        if len(data) < 16:
            raise CorruptDirectory("truncated preamble")
        (version,) = struct.unpack_from("<I", data, 4)
        if version != VERSION:
            raise VersionUnsupported(f"artifact version {version}, supported: {VERSION}")
        (hlen,) = struct.unpack_from("<Q", data, 8)
        if 16 + hlen > len(data):
            raise CorruptDirectory("header overruns file")
        try:
            header = json.loads(data[16 : 16 + hlen])
            model_cfg = ModelConfig.from_json(header["model"])
            feature_cfg = FeatureConfig.from_json(header["features"])
            labels = list(header["labels"])
            directory = header["tensors"]
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptDirectory(f"unreadable header: {exc}") from exc
        blob = data[16 + hlen :]
        tensors: dict[str, TensorEntry] = {}
        for item in directory:
            try:
                shape = tuple(item["shape"])
                offset, nbytes = item["offset"], item["nbytes"]
                dtype = {"float32": np.dtype("<f4"), "int8": np.dtype(np.int8)}[item["dtype"]]
            except (KeyError, TypeError) as exc:
                raise CorruptDirectory(f"bad directory entry: {exc}") from exc
            expected = int(np.prod(shape)) * dtype.itemsize
            if nbytes != expected or offset + nbytes > len(blob):
                raise CorruptDirectory(f"tensor {item.get('name')}: blob out of bounds")
            values = np.frombuffer(blob[offset : offset + nbytes], dtype=dtype).reshape(shape)
            tensors[item["name"]] = TensorEntry(
                values=values.copy(),
                scale=item.get("scale"),
                zero_point=item.get("zero_point"),
            )
        return cls(model_cfg, feature_cfg, labels, tensors,
                   quantized=bool(header.get("quantized", False)),
                   activations={k: list(v) for k, v in header.get("activations", {}).items()},
                   clip_len=int(header.get("clip_len", 0)))


def save_model(artifact: ModelArtifact, path: str | Path) -> None:
    Path(path).write_bytes(artifact.to_bytes())


def load_model(path: str | Path) -> ModelArtifact:
    return ModelArtifact.from_bytes(Path(path).read_bytes())
