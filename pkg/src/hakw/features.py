"""Spectrogram, log-mel, and MFCC front ends.

All knobs live in FeatureConfig and are serialized into model artifacts so
inference always framing-matches training. Spectrograms are power (magnitude
squared); mel filters use the HTK scale m = 2595*log10(1 + f/700); MFCCs are
the orthonormal DCT-II of the natural-log mel energies.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioClip

KINDS = ("spectrogram", "logmel", "mfcc")


class ClipTooShort(ValueError):
    pass


class ConfigMismatch(ValueError):
    pass


@dataclass(frozen=True)
class FeatureConfig:
    """Framing and filterbank parameters (25 ms / 10 ms framing at 16 kHz)."""

    sample_rate: int = 16000
    frame_len: int = 400
    hop: int = 160
    fft_size: int = 512
    n_mels: int = 40
    fmin: float = 20.0
    fmax: float = 7600.0
    n_mfcc: int = 13
    log_floor: float = 1e-10
    window: str = "hann"

    def __post_init__(self) -> None:
        if self.fft_size < self.frame_len:
            raise ValueError("fft_size must be >= frame_len")
        if not (0 <= self.fmin < self.fmax <= self.sample_rate / 2):
            raise ValueError("need 0 <= fmin < fmax <= sample_rate/2")
        if self.n_mfcc > self.n_mels:
            raise ValueError("n_mfcc must be <= n_mels")
        if self.window not in ("hann", "rect"):
            raise ValueError(f"unknown window {self.window!r}")
        if self.frame_len <= 0 or self.hop <= 0:
            raise ValueError("frame_len and hop must be positive")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "FeatureConfig":
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]

    def frame_count(self, n_samples: int) -> int:
        if n_samples < self.frame_len:
            raise ClipTooShort(f"{n_samples} samples < frame_len {self.frame_len}")
        return 1 + (n_samples - self.frame_len) // self.hop

    def samples_for_frames(self, n_frames: int) -> int:
        return (n_frames - 1) * self.hop + self.frame_len


@dataclass
class FeatureMatrix:
    """frames x coefficients grid plus the config that generated it."""

    data: np.ndarray
    kind: str
    config: FeatureConfig

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        self.data = np.asarray(self.data, dtype=np.float64)
        if not np.isfinite(self.data).all():
            raise ValueError("feature matrix contains NaN/Inf")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def _window(cfg: FeatureConfig) -> np.ndarray:
    if cfg.window == "hann":
        return np.hanning(cfg.frame_len)
    return np.ones(cfg.frame_len)


def _frame(samples: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    n_frames = cfg.frame_count(len(samples))
    idx = np.arange(cfg.frame_len)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    return samples[idx]


def stft_power(clip: AudioClip, cfg: FeatureConfig | None = None) -> FeatureMatrix:
    """Power spectrogram: squared magnitude of the windowed, zero-padded DFT."""
    cfg = cfg or FeatureConfig()
    frames = _frame(clip.samples, cfg) * _window(cfg)
    spectrum = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    return FeatureMatrix(np.abs(spectrum) ** 2, "spectrogram", cfg)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FeatureConfig) -> np.ndarray:
    """Triangular mel filters sampled at the FFT bin frequencies, (n_mels, bins)."""
    n_bins = cfg.fft_size // 2 + 1
    bin_hz = np.arange(n_bins) * cfg.sample_rate / cfg.fft_size
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        left, center, right = edges[m], edges[m + 1], edges[m + 2]
        up = (bin_hz - left) / (center - left)
        down = (right - bin_hz) / (right - center)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def filter_centers_hz(cfg: FeatureConfig) -> np.ndarray:
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    return edges[1:-1]


def log_mel(spec: FeatureMatrix, cfg: FeatureConfig | None = None) -> FeatureMatrix:
    """Apply the mel filterbank to a power spectrogram and take the floored log."""
    cfg = cfg or spec.config
    if spec.kind != "spectrogram":
        raise ConfigMismatch(f"expected a spectrogram, got {spec.kind}")
    if spec.config != cfg:
        raise ConfigMismatch("spectrogram was produced with a different config")
    energies = spec.data @ mel_filterbank(cfg).T
    return FeatureMatrix(np.log(np.maximum(energies, cfg.log_floor)), "logmel", cfg)


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows are coefficients."""
    k = np.arange(n)[:, None]
    grid = np.cos(np.pi * k * (2 * np.arange(n)[None, :] + 1) / (2 * n))
    grid *= np.sqrt(2.0 / n)
    grid[0] *= np.sqrt(0.5)
    return grid


def mfcc(clip: AudioClip, cfg: FeatureConfig | None = None) -> FeatureMatrix:
    """MFCCs: orthonormal DCT-II of the log-mel rows, first n_mfcc coefficients."""
    cfg = cfg or FeatureConfig()
    lm = log_mel(stft_power(clip, cfg), cfg)
    coeffs = lm.data @ dct_matrix(cfg.n_mels)[: cfg.n_mfcc].T
    return FeatureMatrix(coeffs, "mfcc", cfg)


def featurize(clip: AudioClip, cfg: FeatureConfig, kind: str) -> FeatureMatrix:
    if kind == "spectrogram":
        return stft_power(clip, cfg)
    if kind == "logmel":
        return log_mel(stft_power(clip, cfg), cfg)
    if kind == "mfcc":
        return mfcc(clip, cfg)
    raise ValueError(f"unknown feature kind {kind!r}")


_CACHE_MAGIC = b"HAKF"


def write_feature_cache(path: str | Path, fm: FeatureMatrix) -> None:
    """One binary file per clip: small JSON header + row-major LE float32 payload."""
    header = json.dumps({
        "kind": fm.kind,
        "shape": list(fm.data.shape),
        "config": fm.config.digest(),
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC + struct.pack("<I", len(header)) + header)
        fh.write(fm.data.astype("<f4").tobytes())


def read_feature_cache(path: str | Path, cfg: FeatureConfig) -> FeatureMatrix:
    data = Path(path).read_bytes()
    if data[:4] != _CACHE_MAGIC:
        raise ConfigMismatch(f"{path}: not a feature cache file")
    (hlen,) = struct.unpack_from("<I", data, 4)
    header = json.loads(data[8 : 8 + hlen])
    if header["config"] != cfg.digest():
        raise ConfigMismatch(f"{path}: cached with a different feature config")
    shape = tuple(header["shape"])
    payload = np.frombuffer(data[8 + hlen :], dtype="<f4")[: shape[0] * shape[1]]
    return FeatureMatrix(payload.reshape(shape).astype(np.float64), header["kind"], cfg)
