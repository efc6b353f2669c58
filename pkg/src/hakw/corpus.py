"""Command vocabulary, corpus ingestion, quality control, and splits.

The manifest is the single shared catalog format: JSON Lines, one record per
line, written by ingestion and the collection service alike and consumed by
the training pipeline. Unknown fields on a record round-trip untouched.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio_io import (AudioClip, MalformedHeader, Unrepairable,
                       UnsupportedEncoding, decode_wav, repair_riff)

log = logging.getLogger("hakw.corpus")

UNKNOWN_LABEL = "_unknown_"
SILENCE_LABEL = "_silence_"

# id, English prompt, Kinyarwanda word. Row order is the canonical menu order.
_VOCABULARY: list[tuple[int, str, str]] = [
    (1, "Zero", "Zeru"),
    (2, "One", "Rimwe"),
    (3, "Two", "Kabiri"),
    (4, "Three", "Gatatu"),
    (5, "Four", "Kane"),
    (6, "Five", "Gatanu"),
    (7, "Six", "Gatandatu"),
    (8, "Seven", "Karindwi"),
    (9, "Eight", "Umunani"),
    (10, "Nine", "Icyenda"),
    (11, "On", "Gucana"),
    (12, "Off", "Kuzimya"),
    (13, "Ok", "Sawa"),
    (14, "Go", "Genda"),
    (15, "Left", "Ibumoso"),
    (16, "Right", "Iburyo"),
    (17, "Up", "Hejuru"),
    (18, "Down", "Hasi"),
    (19, "No", "Oya"),
    (20, "Yes", "Yego"),
    (21, "Start", "Tangira"),
    (22, "Stop", "Hagarara"),
    (23, "Hello Afrika", "Muraho Afrika"),
]


def storage_key(word: str) -> str:
    """Case-folded, whitespace-normalized label key ("Muraho Afrika" -> "muraho_afrika")."""
    return "_".join(word.casefold().split())


class MissingRoot(FileNotFoundError):
    pass


class EmptyIngest(ValueError):
    """An ingest produced zero records."""


class BadRatios(ValueError):
    pass


class QcFlag(str, enum.Enum):
    EMPTY = "EMPTY"
    EXCESSIVE_LEAD_SILENCE = "EXCESSIVE_LEAD_SILENCE"
    CLIPPED_OR_OVERLAP = "CLIPPED_OR_OVERLAP"
    TOO_SHORT = "TOO_SHORT"
    TOO_LONG = "TOO_LONG"


@dataclass(frozen=True)
class Keyword:
    id: int
    english: str
    kinyarwanda: str

    @property
    def label(self) -> str:
        return storage_key(self.kinyarwanda)


@dataclass(frozen=True)
class LabelSet:
    """The 23 command keywords plus the two reserved negative classes."""

    keywords: tuple[Keyword, ...]
    reserved: tuple[str, str] = (UNKNOWN_LABEL, SILENCE_LABEL)

    @property
    def labels(self) -> list[str]:
        return [k.label for k in self.keywords] + list(self.reserved)

    def by_english(self, english: str) -> Keyword:
        key = storage_key(english)
        for k in self.keywords:
            if storage_key(k.english) == key:
                return k
        raise KeyError(english)

    def by_id(self, keyword_id: int) -> Keyword:
        for k in self.keywords:
            if k.id == keyword_id:
                return k
        raise KeyError(keyword_id)

    def __contains__(self, label: str) -> bool:
        return label in self.reserved or any(k.label == label for k in self.keywords)


def builtin_labelset() -> LabelSet:
    """The built-in 23-word Kinyarwanda command vocabulary plus reserved labels."""
    return LabelSet(keywords=tuple(Keyword(i, en, rw) for i, en, rw in _VOCABULARY))


@dataclass
class QcPolicy:
    """Thresholds for automatic clip quality control.

    Defaults are pragmatic starting points, not calibrated constants; tune per
    corpus through the pipeline config.
    """

    empty_rms: float = 1e-4
    speech_rms: float = 0.01
    frame_ms: int = 25
    max_lead_ms: int = 500
    min_duration_ms: int = 200
    max_duration_ms: int = 3000
    clip_level: float = 0.999
    clip_fraction: float = 0.001


_RECORD_FIELDS = ("id", "path", "label", "speaker", "source", "duration_ms",
                  "sample_rate", "qc_flags", "split", "checksum")


@dataclass
class SampleRecord:
    """One cataloged utterance."""

    id: str
    path: str
    label: str
    speaker: str
    source: str
    duration_ms: int
    sample_rate: int
    qc_flags: set[QcFlag] = field(default_factory=set)
    split: str = "train"
    checksum: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = {
            "id": self.id,
            "path": self.path,
            "label": self.label,
            "speaker": self.speaker,
            "source": self.source,
            "duration_ms": self.duration_ms,
            "sample_rate": self.sample_rate,
            "qc_flags": sorted(f.value for f in self.qc_flags),
            "split": self.split,
            "checksum": self.checksum,
        }
        d.update(self.extra)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SampleRecord":
        extra = {k: v for k, v in d.items() if k not in _RECORD_FIELDS}
        return cls(
            id=d["id"], path=d["path"], label=d["label"], speaker=d["speaker"],
            source=d["source"], duration_ms=d["duration_ms"],
            sample_rate=d["sample_rate"],
            qc_flags={QcFlag(f) for f in d.get("qc_flags", [])},
            split=d.get("split", "train"), checksum=d.get("checksum", ""),
            extra=extra,
        )


@dataclass
class Manifest:
    """Append-only collection of sample records."""

    records: list[SampleRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def for_split(self, split: str) -> list[SampleRecord]:
        return [r for r in self.records if r.split == split]

    def by_id(self, record_id: str) -> SampleRecord:
        for r in self.records:
            if r.id == record_id:
                return r
        raise KeyError(record_id)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        records = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(SampleRecord.from_json(json.loads(line)))
        return cls(records)


def _speaker_from_stem(stem: str, checksum: str) -> str:
    if "_nohash_" in stem:
        return stem.split("_nohash_")[0]
    if "__" in stem:
        return stem.split("__")[0]
    return "anon-" + checksum[:8]


def _label_for_directory(name: str, source: str, labelset: LabelSet) -> str | None:
    key = storage_key(name)
    if key in (UNKNOWN_LABEL, SILENCE_LABEL):
        return key
    if source == "gsc":
        if key == "_background_noise_":
            return SILENCE_LABEL
        try:
            return labelset.by_english(name).label
        except KeyError:
            return None
    return key if key in labelset else None


def _keyword_dirs(root: Path, source: str):
    """Yield per-keyword directories for the given layout convention."""
    if source == "mswc":
        for lang in sorted(p for p in root.iterdir() if p.is_dir()):
            clips = lang / "clips"
            if clips.is_dir():
                yield from sorted(p for p in clips.iterdir() if p.is_dir())
    else:
        yield from sorted(p for p in root.iterdir() if p.is_dir())


def read_clip(path: str | Path, source_id: str | None = None) -> AudioClip:
    """Decode a WAV file, transparently repairing a stripped RIFF preamble."""
    data = Path(path).read_bytes()
    try:
        return decode_wav(data, source_id=source_id)
    except MalformedHeader:
        return decode_wav(repair_riff(data), source_id=source_id)


def ingest(root: str | Path, source: str, labelset: LabelSet | None = None) -> Manifest:
    """Walk a corpus tree and catalog every readable clip.

    Layouts: flat per-keyword directories of WAV files (gsc/local), or
    language/clips/keyword nesting (mswc). GSC directory names are English and
    bridge to the Kinyarwanda vocabulary; other layouts use the Kinyarwanda
    storage keys directly. Directories that map to no label are skipped.
    """
    if source not in ("mswc", "gsc", "local"):
        raise ValueError(f"unknown source {source!r}")
    labelset = labelset or builtin_labelset()
    root = Path(root)
    if not root.is_dir():
        raise MissingRoot(str(root))
    records: list[SampleRecord] = []
    skipped_dirs = 0
    unreadable = 0
    for directory in _keyword_dirs(root, source):
        label = _label_for_directory(directory.name, source, labelset)
        if label is None:
            skipped_dirs += 1
            continue
        for wav_path in sorted(directory.glob("*.wav")):
            data = wav_path.read_bytes()
            try:
                try:
                    clip = decode_wav(data)
                except MalformedHeader:
                    clip = decode_wav(repair_riff(data))
            except (MalformedHeader, UnsupportedEncoding, Unrepairable):
                unreadable += 1
                continue
            checksum = hashlib.sha256(data).hexdigest()
            rel = wav_path.relative_to(root).as_posix()
            records.append(SampleRecord(
                id=hashlib.sha1(f"{source}:{rel}".encode()).hexdigest()[:16],
                path=rel,
                label=label,
                speaker=_speaker_from_stem(wav_path.stem, checksum),
                source=source,
                duration_ms=clip.duration_ms,
                sample_rate=clip.sample_rate,
                checksum=checksum,
            ))
    if skipped_dirs:
        log.warning("ingest %s: skipped %d unmapped directories", root, skipped_dirs)
    if unreadable:
        log.warning("ingest %s: skipped %d unreadable files", root, unreadable)
    if not records:
        raise EmptyIngest(f"no records produced from {root}")
    return Manifest(records)


def _frame_rms(samples: np.ndarray, frame_len: int) -> np.ndarray:
    n_frames = len(samples) // frame_len
    if n_frames == 0:
        return np.array([np.sqrt(np.mean(samples**2))])
    framed = samples[: n_frames * frame_len].reshape(n_frames, frame_len)
    return np.sqrt(np.mean(framed**2, axis=1))


def validate_clip(clip: AudioClip, policy: QcPolicy | None = None) -> set[QcFlag]:
    """Run automatic quality checks on one clip and return the flags raised."""
    policy = policy or QcPolicy()
    if len(clip) < 1:
        raise ValueError("degenerate clip")
    flags: set[QcFlag] = set()
    samples = clip.samples
    if np.sqrt(np.mean(samples**2)) < policy.empty_rms:
        flags.add(QcFlag.EMPTY)
    frame_len = max(1, int(clip.sample_rate * policy.frame_ms / 1000))
    rms = _frame_rms(samples, frame_len)
    speech_frames = np.nonzero(rms >= policy.speech_rms)[0]
    if len(speech_frames) == 0:
        flags.add(QcFlag.EXCESSIVE_LEAD_SILENCE)
    else:
        lead_ms = speech_frames[0] * policy.frame_ms
        if lead_ms > policy.max_lead_ms:
            flags.add(QcFlag.EXCESSIVE_LEAD_SILENCE)
    if clip.duration_ms < policy.min_duration_ms:
        flags.add(QcFlag.TOO_SHORT)
    if clip.duration_ms > policy.max_duration_ms:
        flags.add(QcFlag.TOO_LONG)
    if np.mean(np.abs(samples) >= policy.clip_level) >= policy.clip_fraction:
        flags.add(QcFlag.CLIPPED_OR_OVERLAP)
    return flags


def _review_approved(record: SampleRecord) -> bool:
    review = record.extra.get("review")
    return bool(review) and review.get("verdict") == "approved"


def _speaker_order_hash(speaker: str, seed: int) -> int:
    digest = hashlib.sha256(f"{seed}:{speaker}".encode()).hexdigest()
    return int(digest[:16], 16)


def split_manifest(manifest: Manifest, ratios: tuple[float, float, float],
                   seed: int) -> Manifest:
    """Assign train/val/test splits, keeping each speaker in exactly one split.

    Speakers are ordered by a hash of (speaker, seed) and packed against the
    cumulative ratio boundaries, so the achieved proportions land within one
    speaker's worth of records of the targets and the result is invariant
    under record reordering. QC-flagged records (without an approving review)
    and previously excluded records stay out.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios must be positive and sum to 1, got {ratios}")
    out = [replace(r, qc_flags=set(r.qc_flags), extra=dict(r.extra)) for r in manifest.records]
    eligible = []
    derived = []
    for r in out:
        if r.split == "excluded" or (r.qc_flags and not _review_approved(r)):
            r.split = "excluded"
        elif "augment" in r.extra:
            derived.append(r)
        else:
            eligible.append(r)
    by_speaker: dict[str, list[SampleRecord]] = {}
    for r in eligible:
        by_speaker.setdefault(r.speaker, []).append(r)
    speakers = sorted(by_speaker, key=lambda s: (_speaker_order_hash(s, seed), s))
    if len(speakers) == 1:
        warnings.warn("single-speaker manifest: all records assigned to one split",
                      stacklevel=2)
    total = len(eligible)
    b_train = ratios[0] * total
    b_val = (ratios[0] + ratios[1]) * total
    cum = 0
    speaker_split: dict[str, str] = {}
    for speaker in speakers:
        split = "train" if cum < b_train else ("val" if cum < b_val else "test")
        speaker_split[speaker] = split
        for r in by_speaker[speaker]:
            r.split = split
        cum += len(by_speaker[speaker])
    # augmented copies follow their speaker into train but never val/test
    for r in derived:
        r.split = "train" if speaker_split.get(r.speaker) == "train" else "excluded"
    return Manifest(out)


def word_counts(manifest: Manifest, labelset: LabelSet | None = None) -> dict[str, int]:
    """Per-label counts of non-excluded records; every label present, zeros kept."""
    labelset = labelset or builtin_labelset()
    counts = {label: 0 for label in labelset.labels}
    for r in manifest.records:
        if r.split != "excluded":
            counts[r.label] = counts.get(r.label, 0) + 1
    return counts
