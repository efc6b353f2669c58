"""Waveform augmentations: time shift, playback-speed change, gain.

Speed change is naive index remapping, so pitch moves with the factor; the
zero-padding leg of the recipe happens when augmented clips get canonicalized
back to their parent's length. Manifest-level application is a pure function
of (manifest, policy): selection and parameters derive from the policy seed
and record ids, never from iteration order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, encode_wav, pad_or_trim
from .corpus import Manifest, SampleRecord, read_clip


class BadFactor(ValueError):
    pass


@dataclass
class AugmentPolicy:
    """What fraction of the train split to augment, and how hard."""

    fraction: float = 0.8
    shift_ms_range: tuple[float, float] = (-100.0, 100.0)
    speed_range: tuple[float, float] = (0.85, 1.15)
    gain_db_range: tuple[float, float] = (-6.0, 6.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must be in [0, 1]")
        for lo, hi in (self.shift_ms_range, self.speed_range, self.gain_db_range):
            if lo > hi:
                raise ValueError("augmentation ranges must be well-ordered")


def time_shift(clip: AudioClip, shift_ms: float) -> AudioClip:
    """Shift samples by shift_ms (positive delays), zero-filling the gap."""
    n = len(clip)
    shift = int(round(shift_ms * clip.sample_rate / 1000.0))
    out = np.zeros(n)
    if shift >= 0:
        if shift < n:
            out[shift:] = clip.samples[: n - shift]
    else:
        if -shift < n:
            out[: n + shift] = clip.samples[-shift:]
    return AudioClip(out, clip.sample_rate, clip.source_id)


def change_speed(clip: AudioClip, factor: float) -> AudioClip:
    """Play the clip back factor times faster; pitch scales along with it."""
    if factor <= 0:
        raise BadFactor(f"speed factor must be positive, got {factor}")
    if factor == 1.0:
        return clip
    n = len(clip)
    m = int(n / factor)
    positions = np.arange(m) * factor
    out = np.interp(positions, np.arange(n), clip.samples)
    return AudioClip(np.clip(out, -1.0, 1.0), clip.sample_rate, clip.source_id)


def amplify(clip: AudioClip, gain_db: float) -> AudioClip:
    """Scale by 10^(gain_db/20), clamping to [-1, 1]."""
    out = np.clip(clip.samples * 10.0 ** (gain_db / 20.0), -1.0, 1.0)
    return AudioClip(out, clip.sample_rate, clip.source_id)


def _record_rng(policy_seed: int, record_id: str) -> np.random.Generator:
    digest = hashlib.sha256(record_id.encode()).digest()
    words = [int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)]
    return np.random.default_rng([policy_seed & 0xFFFFFFFF, *words])


def apply_augmentation(clip: AudioClip, kind: str, param: float) -> AudioClip:
    if kind == "shift":
        out = time_shift(clip, param)
    elif kind == "speed":
        out = change_speed(clip, param)
    elif kind == "gain":
        out = amplify(clip, param)
    else:
        raise ValueError(f"unknown augmentation kind {kind!r}")
    return pad_or_trim(out, len(clip))


def augment_manifest(manifest: Manifest, policy: AugmentPolicy,
                     data_dir: str | Path) -> Manifest:
    """Augment a seeded selection of train records, appending the new records.

    round(fraction * |train|) records are chosen by seeded shuffle; each gets
    one augmentation with parameters drawn from the policy ranges. Augmented
    clips are written beside their parents with an .aug1.wav suffix and carry
    provenance in the record. Originals are retained; augmented records only
    ever land in the train split.
    """
    data_dir = Path(data_dir)
    train = sorted(manifest.for_split("train"), key=lambda r: r.id)
    k = round(policy.fraction * len(train))
    order = np.random.default_rng(policy.seed).permutation(len(train))
    selected = [train[i] for i in sorted(order[:k])]
    new_records: list[SampleRecord] = []
    for parent in selected:
        rng = _record_rng(policy.seed, parent.id)
        kind = ("shift", "speed", "gain")[rng.integers(3)]
        if kind == "shift":
            param = float(rng.uniform(*policy.shift_ms_range))
        elif kind == "speed":
            param = float(rng.uniform(*policy.speed_range))
        else:
            param = float(rng.uniform(*policy.gain_db_range))
        clip = read_clip(data_dir / parent.path)
        augmented = apply_augmentation(clip, kind, param)
        out_path = parent.path[: -len(".wav")] + ".aug1.wav" \
            if parent.path.endswith(".wav") else parent.path + ".aug1.wav"
        payload = encode_wav(augmented)
        (data_dir / out_path).write_bytes(payload)
        new_records.append(SampleRecord(
            id=parent.id + ".aug1",
            path=out_path,
            label=parent.label,
            speaker=parent.speaker,
            source=parent.source,
            duration_ms=augmented.duration_ms,
            sample_rate=augmented.sample_rate,
            split="train",
            checksum=hashlib.sha256(payload).hexdigest(),
            extra={"augment": {"parent": parent.id, "kind": kind, "param": param}},
        ))
    return Manifest(list(manifest.records) + new_records)
