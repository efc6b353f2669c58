"""Manifest-to-feature-array glue shared by the CLI, tests, and training."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio_io import AudioClip, pad_or_trim, resample
from .corpus import Manifest, read_clip
from .features import FeatureConfig, featurize, read_feature_cache, write_feature_cache


def canonical_clip(path: str | Path, feature_cfg: FeatureConfig,
                   clip_len: int) -> AudioClip:
    """Load, resample to the feature rate, and fix the length."""
    clip = read_clip(path)
    if clip.sample_rate != feature_cfg.sample_rate:
        clip = resample(clip, feature_cfg.sample_rate)
    return pad_or_trim(clip, clip_len)


def manifest_labels(manifest: Manifest) -> list[str]:
    """Sorted unique labels among non-excluded records: the model's class list."""
    return sorted({r.label for r in manifest if r.split != "excluded"})


def split_features(manifest: Manifest, data_dir: str | Path,
                   feature_cfg: FeatureConfig, kind: str, split: str,
                   labels: list[str], clip_len: int | None = None,
                   cache_dir: str | Path | None = None):
    """Feature matrices and label indices for one split, ordered by record id."""
    data_dir = Path(data_dir)
    clip_len = clip_len or feature_cfg.sample_rate
    index = {label: i for i, label in enumerate(labels)}
    rows, ys = [], []
    for record in sorted(manifest.for_split(split), key=lambda r: r.id):
        if record.label not in index:
            continue
        cached = Path(cache_dir) / f"{record.id}.feat" if cache_dir else None
        if cached is not None and cached.exists():
            fm = read_feature_cache(cached, feature_cfg)
        else:
            clip = canonical_clip(data_dir / record.path, feature_cfg, clip_len)
            fm = featurize(clip, feature_cfg, kind)
        rows.append(fm.data)
        ys.append(index[record.label])
    if not rows:
        return (np.zeros((0, feature_cfg.frame_count(clip_len),
                          0)), np.zeros(0, dtype=np.int64))
    return np.stack(rows), np.asarray(ys, dtype=np.int64)


def featurize_manifest(manifest: Manifest, data_dir: str | Path,
                       feature_cfg: FeatureConfig, kind: str,
                       out_dir: str | Path, clip_len: int | None = None) -> int:
    """Write one feature-cache file per non-excluded record; returns the count."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    clip_len = clip_len or feature_cfg.sample_rate
    written = 0
    for record in manifest:
        if record.split == "excluded":
            continue
        clip = canonical_clip(Path(data_dir) / record.path, feature_cfg, clip_len)
        write_feature_cache(out_dir / f"{record.id}.feat", featurize(clip, feature_cfg, kind))
        written += 1
    return written
