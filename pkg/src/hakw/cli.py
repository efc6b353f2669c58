"""One executable for the whole pipeline.

Subcommands mirror the processing stages: ingest -> clean -> split ->
augment -> featurize -> train/finetune -> eval -> quantize -> listen, plus
`words`, `stats`, and `serve`. A JSON config file supplies per-module
settings; flags override the file. Exit codes: 0 ok, 1 operational error,
2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import audio_io
from .augment import AugmentPolicy, augment_manifest
from .corpus import (Manifest, QcPolicy, builtin_labelset, ingest,
                     split_manifest, validate_clip, word_counts)
from .deploy import (DetectorConfig, load_model, quantize_int8, save_model,
                     stream_detect)
from .features import FeatureConfig
from .nn import ModelConfig, TrainConfig, evaluate, fine_tune, train
from .pipeline import featurize_manifest, manifest_labels, split_features


class ConfigError(ValueError):
    pass


_SECTIONS = {
    "qc": QcPolicy,
    "features": FeatureConfig,
    "augment": AugmentPolicy,
    "model": ModelConfig,
    "train": TrainConfig,
    "detector": DetectorConfig,
}

# dataclass fields that arrive as JSON lists
_TUPLE_FIELDS = {"input_shape", "shift_ms_range", "speed_range", "gain_db_range"}


def load_config(path: str | None) -> dict[str, dict]:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    out: dict[str, dict] = {}
    for section, body in raw.items():
        if section not in _SECTIONS:
            raise ConfigError(f"{section}: unknown section "
                              f"(expected one of {sorted(_SECTIONS)})")
        if not isinstance(body, dict):
            raise ConfigError(f"{section}: must be a JSON object")
        known = {f.name for f in dataclasses.fields(_SECTIONS[section])}
        for key, value in body.items():
            if key not in known:
                raise ConfigError(f"{section}.{key}: unknown key")
            if key in _TUPLE_FIELDS and isinstance(value, list):
                body[key] = tuple(value)
        out[section] = body
    return out


def _section(config: dict, name: str, **overrides):
    body = dict(config.get(name, {}))
    body.update({k: v for k, v in overrides.items() if v is not None})
    return _SECTIONS[name](**body)


def _data_dir(args) -> Path:
    root = args.data_dir or os.environ.get("HAKW_DATA_DIR")
    if not root:
        raise ConfigError("no data directory: pass --data-dir or set HAKW_DATA_DIR")
    return Path(root)


def _write_json(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, indent=2, ensure_ascii=False)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _load_split(manifest, data_dir, feature_cfg, kind, split, labels, clip_len,
                cache_dir):
    x, y = split_features(manifest, data_dir, feature_cfg, kind, split, labels,
                          clip_len=clip_len, cache_dir=cache_dir)
    return x.astype(np.float32), y


def cmd_words(args) -> int:
    labelset = builtin_labelset()
    if args.json:
        payload = [{"id": k.id, "english": k.english, "kinyarwanda": k.kinyarwanda,
                    "label": k.label} for k in labelset.keywords]
        _write_json(args.out, {"keywords": payload,
                               "reserved": list(labelset.reserved)})
        return 0
    for k in labelset.keywords:
        print(f"{k.id:2d}. {k.english:<12} {k.kinyarwanda}")
    for reserved in labelset.reserved:
        print(f"  . {reserved}")
    return 0


def cmd_ingest(args) -> int:
    manifest = ingest(args.root, args.source)
    manifest.save(args.out)
    print(f"ingested {len(manifest)} records from {args.root} -> {args.out}")
    return 0


def cmd_clean(args) -> int:
    config = load_config(args.config)
    policy = _section(config, "qc")
    data_dir = _data_dir(args)
    manifest = Manifest.load(args.manifest)
    repaired = flagged = 0
    for record in manifest:
        path = data_dir / record.path
        data = path.read_bytes()
        fixed = audio_io.repair_riff(data)
        if fixed != data:
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(fixed)
            tmp.replace(path)
            record.checksum = hashlib.sha256(fixed).hexdigest()
            repaired += 1
        clip = audio_io.decode_wav(fixed)
        record.duration_ms = clip.duration_ms
        record.sample_rate = clip.sample_rate
        record.qc_flags = validate_clip(clip, policy)
        if record.qc_flags:
            record.split = "excluded"
            flagged += 1
    manifest.save(args.out or args.manifest)
    print(f"cleaned {len(manifest)} records: {repaired} repaired, {flagged} excluded")
    return 0


def cmd_split(args) -> int:
    ratios = tuple(float(r) for r in args.ratios.split(","))
    manifest = split_manifest(Manifest.load(args.manifest), ratios, args.seed)
    manifest.save(args.out or args.manifest)
    counts = {s: len(manifest.for_split(s)) for s in ("train", "val", "test", "excluded")}
    print(f"split -> {counts}")
    return 0


def cmd_augment(args) -> int:
    config = load_config(args.config)
    policy = _section(config, "augment", fraction=args.fraction, seed=args.seed)
    manifest = Manifest.load(args.manifest)
    out = augment_manifest(manifest, policy, _data_dir(args))
    out.save(args.out or args.manifest)
    print(f"augmented {len(out) - len(manifest)} clips "
          f"({len(manifest)} -> {len(out)} records)")
    return 0


def cmd_featurize(args) -> int:
    config = load_config(args.config)
    feature_cfg = _section(config, "features")
    manifest = Manifest.load(args.manifest)
    clip_len = int(args.clip_ms * feature_cfg.sample_rate / 1000)
    n = featurize_manifest(manifest, _data_dir(args), feature_cfg, args.kind,
                           args.out_dir, clip_len=clip_len)
    print(f"wrote {n} feature files to {args.out_dir}")
    return 0


def _prepare_training_data(args, config, feature_cfg, kind):
    manifest = Manifest.load(args.manifest)
    data_dir = _data_dir(args)
    labels = manifest_labels(manifest)
    clip_len = int(args.clip_ms * feature_cfg.sample_rate / 1000)
    x_tr, y_tr = _load_split(manifest, data_dir, feature_cfg, kind, "train",
                             labels, clip_len, args.cache_dir)
    x_val, y_val = _load_split(manifest, data_dir, feature_cfg, kind, "val",
                               labels, clip_len, args.cache_dir)
    if len(x_tr) == 0:
        raise ConfigError("manifest has no train-split records")
    if len(x_val) == 0:
        print("warning: no val split; validating on the train split",
              file=sys.stderr)
        x_val, y_val = x_tr, y_tr
    return labels, (x_tr, y_tr), (x_val, y_val)


def cmd_train(args) -> int:
    config = load_config(args.config)
    feature_cfg = _section(config, "features")
    kind = args.features or config.get("model", {}).get("feature_kind") \
        or ("spectrogram" if args.arch == "cnn" else "mfcc")
    labels, train_set, val_set = _prepare_training_data(args, config, feature_cfg, kind)
    model_cfg = _section(config, "model", arch=args.arch, feature_kind=kind,
                         input_shape=tuple(train_set[0].shape[1:]),
                         classes=len(labels))
    train_cfg = _section(config, "train", seed=args.seed, max_epochs=args.epochs,
                         batch_size=args.batch_size,
                         learning_rate=args.learning_rate,
                         early_stop_patience=args.patience)
    clip_len = int(args.clip_ms * feature_cfg.sample_rate / 1000)
    artifact, report = train(model_cfg, train_cfg, train_set, val_set, labels,
                             feature_cfg, clip_len=clip_len)
    save_model(artifact, args.out)
    print(f"trained {args.arch} on {kind}: best val accuracy "
          f"{report.best_val_accuracy:.3f} (epoch {report.best_epoch}/"
          f"{report.stopped_epoch}) -> {args.out}")
    if args.report:
        _write_json(args.report, report.to_json())
    return 0


def cmd_finetune(args) -> int:
    config = load_config(args.config)
    pretrained = load_model(args.model)
    feature_cfg = pretrained.feature_cfg
    kind = pretrained.model_cfg.feature_kind
    labels, train_set, val_set = _prepare_training_data(args, config, feature_cfg, kind)
    train_cfg = _section(config, "train", seed=args.seed, max_epochs=args.epochs,
                         batch_size=args.batch_size,
                         freeze_feature_layers=args.freeze or None)
    artifact, report = fine_tune(pretrained, train_cfg, train_set, val_set,
                                 labels, feature_cfg=feature_cfg)
    save_model(artifact, args.out)
    print(f"fine-tuned: best val accuracy {report.best_val_accuracy:.3f} -> {args.out}")
    if args.report:
        _write_json(args.report, report.to_json())
    return 0


def cmd_eval(args) -> int:
    artifact = load_model(args.model)
    manifest = Manifest.load(args.manifest)
    data_dir = _data_dir(args)
    labels = list(artifact.labels)
    x, y = _load_split(manifest, data_dir, artifact.feature_cfg,
                       artifact.model_cfg.feature_kind, args.split, labels,
                       artifact.clip_len, args.cache_dir)
    if len(x) == 0:
        raise ConfigError(f"no records in split {args.split!r} with model labels")
    report = evaluate(artifact.to_model(), x, y)
    payload = {"split": args.split, "labels": labels,
               "accuracy": report.accuracy, "total": report.total,
               "confusion": report.confusion}
    _write_json(args.out, payload)
    return 0


def cmd_quantize(args) -> int:
    artifact = load_model(args.model)
    manifest = Manifest.load(args.manifest)
    labels = list(artifact.labels)
    x, _ = _load_split(manifest, _data_dir(args), artifact.feature_cfg,
                       artifact.model_cfg.feature_kind, args.calibration_split,
                       labels, artifact.clip_len, None)
    quantized = quantize_int8(artifact, x)
    save_model(quantized, args.out)
    before = Path(args.model).stat().st_size
    after = Path(args.out).stat().st_size
    print(f"quantized {args.model} ({before} B) -> {args.out} ({after} B), "
          f"{before / after:.2f}x smaller")
    return 0


def _stream_chunks(args, rate):
    if args.wav:
        clip = audio_io.decode_wav(Path(args.wav).read_bytes())
        if clip.sample_rate != rate:
            clip = audio_io.resample(clip, rate)
        chunk = max(1, rate // 10)
        for i in range(0, len(clip.samples), chunk):
            yield clip.samples[i : i + chunk]
    else:
        while True:
            raw = sys.stdin.buffer.read(rate // 10 * 2)
            if not raw:
                return
            yield np.frombuffer(raw[: len(raw) - len(raw) % 2],
                                dtype="<i2").astype(np.float64) / 32768.0


def cmd_listen(args) -> int:
    config = load_config(args.config)
    artifact = load_model(args.model)
    cfg = _section(config, "detector", threshold=args.threshold,
                   window_ms=args.window_ms, hop_ms=args.hop_ms,
                   smooth_k=args.smooth, refractory_ms=args.refractory_ms,
                   wake_label=args.wake_label)
    events = []
    for event in stream_detect(_stream_chunks(args, artifact.feature_cfg.sample_rate),
                               artifact, cfg):
        line = {"label": event.label, "time_ms": event.time_ms,
                "confidence": round(event.confidence, 4)}
        if event.label == cfg.wake_label:
            line["wake"] = True
        print(json.dumps(line), flush=True)
        events.append(line)
    if args.out:
        _write_json(args.out, {"events": events})
    return 0


def cmd_stats(args) -> int:
    manifest = Manifest.load(args.manifest)
    counts = word_counts(manifest)
    payload = {
        "per_word_counts": counts,
        "total_records": len(manifest),
        "splits": {s: len(manifest.for_split(s))
                   for s in ("train", "val", "test", "excluded", "pending")},
        "total_speakers": len({r.speaker for r in manifest}),
        "total_duration_ms": int(sum(r.duration_ms for r in manifest)),
    }
    _write_json(args.out, payload)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(_data_dir(args), ui_origin=args.ui_origin,
                     review_token=args.review_token, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hakw",
        description="Kinyarwanda speech-command toolkit: corpus, features, "
                    "training, quantization, streaming detection, collection service.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False, config=False, seed=False):
        if data:
            p.add_argument("--data-dir", help="data root (default $HAKW_DATA_DIR)")
        if config:
            p.add_argument("--config", help="pipeline config JSON")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("words", help="print the command vocabulary")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_words)

    p = sub.add_parser("ingest", help="catalog a corpus tree into a manifest")
    p.add_argument("--root", required=True)
    p.add_argument("--source", required=True, choices=["mswc", "gsc", "local"])
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("clean", help="repair RIFF headers and run QC flags")
    common(p, data=True, config=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_clean)

    p = sub.add_parser("split", help="assign speaker-disjoint train/val/test")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("augment", help="append augmented copies of train clips")
    common(p, data=True, config=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--fraction", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("featurize", help="write per-clip feature cache files")
    common(p, data=True, config=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", default="mfcc",
                   choices=["spectrogram", "logmel", "mfcc"])
    p.add_argument("--out-dir", required=True)
    p.add_argument("--clip-ms", type=int, default=1000)
    p.set_defaults(fn=cmd_featurize)

    p = sub.add_parser("train", help="train a model from a manifest")
    common(p, data=True, config=True, seed=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--arch", default="lstm", choices=["cnn", "lstm"])
    p.add_argument("--features", choices=["spectrogram", "logmel", "mfcc"])
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--clip-ms", type=int, default=1000)
    p.add_argument("--cache-dir")
    p.add_argument("--report", help="write the training history JSON here")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("finetune", help="continue training a saved model")
    common(p, data=True, config=True, seed=True)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--freeze", action="store_true",
                   help="freeze everything below the output layer")
    p.add_argument("--clip-ms", type=int, default=1000)
    p.add_argument("--cache-dir")
    p.add_argument("--report")
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("eval", help="accuracy and confusion matrix on a split")
    common(p, data=True)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="val")
    p.add_argument("--cache-dir")
    p.add_argument("--out", help="write the JSON report here (stdout otherwise)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("quantize", help="post-training int8 quantization")
    common(p, data=True)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True,
                   help="manifest supplying the calibration features")
    p.add_argument("--calibration-split", default="train")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_quantize)

    p = sub.add_parser("listen", help="stream keyword detection over audio")
    common(p, config=True)
    p.add_argument("--model", required=True)
    p.add_argument("--wav", help="WAV file; otherwise PCM16 LE on stdin")
    p.add_argument("--threshold", type=float)
    p.add_argument("--window-ms", type=int)
    p.add_argument("--hop-ms", type=int)
    p.add_argument("--smooth", type=int)
    p.add_argument("--refractory-ms", type=int)
    p.add_argument("--wake-label")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_listen)

    p = sub.add_parser("stats", help="per-word counts and split sizes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("serve", help="run the collection service")
    common(p, data=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8571)
    p.add_argument("--ui-origin", default="*")
    p.add_argument("--review-token")
    p.add_argument("--ui-dir", help="serve a built browser UI from this directory")
    p.set_defaults(fn=cmd_serve)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        return 1
    except (OSError, ValueError, ArithmeticError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
