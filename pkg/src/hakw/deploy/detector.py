"""Streaming keyword detection over a chunked sample stream.

A ring buffer holds the last window of audio; every hop the window is
featurized and classified, posteriors are averaged over the last few windows,
and an event fires when a non-reserved label's smoothed posterior clears the
threshold outside its refractory period. `_unknown_` and `_silence_` never
emit. One thread owns a detector; feed it chunks, collect events.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..audio_io import AudioClip, pad_or_trim
from ..features import featurize
from .artifact import ModelArtifact
from .quantize import QuantizedModel


class RateMismatch(ValueError):
    pass


@dataclass
class DetectorConfig:
    window_ms: int = 1000
    hop_ms: int = 250
    smooth_k: int = 3
    threshold: float = 0.7
    refractory_ms: int = 1000
    wake_label: str = "muraho_afrika"

    def __post_init__(self) -> None:
        if self.hop_ms > self.window_ms:
            raise ValueError("hop_ms must be <= window_ms")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")
        if self.smooth_k < 1:
            raise ValueError("smooth_k must be >= 1")


@dataclass
class DetectionEvent:
    label: str
    time_ms: int
    confidence: float


def is_reserved(label: str) -> bool:
    return label.startswith("_") and label.endswith("_")


def make_runner(artifact: ModelArtifact):
    """Batch-of-features -> class probabilities, float or int8 as stored."""
    if artifact.quantized:
        return QuantizedModel(artifact).forward
    model = artifact.to_model()
    return lambda x: model.forward(x)


class StreamingDetector:
    def __init__(self, artifact: ModelArtifact, cfg: DetectorConfig | None = None):
        self.cfg = cfg or DetectorConfig()
        self.artifact = artifact
        self.feature_cfg = artifact.feature_cfg
        self.rate = self.feature_cfg.sample_rate
        self.kind = artifact.model_cfg.feature_kind
        self.labels = list(artifact.labels)
        self.runner = make_runner(artifact)
        self.window = max(1, round(self.cfg.window_ms * self.rate / 1000))
        self.hop = max(1, round(self.cfg.hop_ms * self.rate / 1000))
        self.clip_len = artifact.clip_len
        self._emittable = [i for i, lab in enumerate(self.labels) if not is_reserved(lab)]
        self._buf = np.zeros(0)
        self._buf_start = 0  # absolute sample index of _buf[0]
        self._next_eval = self.window
        self._recent: deque[np.ndarray] = deque(maxlen=self.cfg.smooth_k)
        self._last_emit: dict[str, int] = {}

    def _evaluate(self, window: np.ndarray, end_sample: int) -> DetectionEvent | None:
        clip = pad_or_trim(AudioClip(window, self.rate), self.clip_len)
        feats = featurize(clip, self.feature_cfg, self.kind).data[None]
        self._recent.append(self.runner(feats)[0])
        smoothed = np.mean(self._recent, axis=0)
        if not self._emittable:
            return None
        best = max(self._emittable, key=lambda i: (smoothed[i], -i))
        confidence = float(smoothed[best])
        if confidence < self.cfg.threshold:
            return None
        label = self.labels[best]
        t_ms = int(round(end_sample * 1000 / self.rate))
        last = self._last_emit.get(label)
        if last is not None and t_ms - last < self.cfg.refractory_ms:
            return None
        self._last_emit[label] = t_ms
        return DetectionEvent(label=label, time_ms=t_ms, confidence=confidence)

    def feed(self, samples: np.ndarray) -> list[DetectionEvent]:
        """Push a chunk of float samples; returns any events it completed."""
        samples = np.asarray(samples, dtype=np.float64).ravel()
        if len(samples):
            self._buf = np.concatenate([self._buf, samples])
        events = []
        while self._buf_start + len(self._buf) >= self._next_eval:
            lo = self._next_eval - self.window - self._buf_start
            hi = self._next_eval - self._buf_start
            event = self._evaluate(self._buf[lo:hi], self._next_eval)
            if event is not None:
                events.append(event)
            self._next_eval += self.hop
        keep_from = max(0, self._next_eval - self.window - self._buf_start)
        if keep_from:
            self._buf = self._buf[keep_from:]
            self._buf_start += keep_from
        return events


def stream_detect(chunks, artifact: ModelArtifact,
                  cfg: DetectorConfig | None = None,
                  sample_rate: int | None = None):
    """Run the detector over an iterable of sample chunks, yielding events."""
    if sample_rate is not None and sample_rate != artifact.feature_cfg.sample_rate:
        raise RateMismatch(
            f"stream at {sample_rate} Hz, model expects "
            f"{artifact.feature_cfg.sample_rate} Hz")
    detector = StreamingDetector(artifact, cfg)
    for chunk in chunks:
        yield from detector.feed(chunk)
