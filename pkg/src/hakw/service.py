"""HTTP API for crowdsourced recording collection and review.

Storage is deliberately plain: a JSON-Lines manifest plus flat WAV files
under <data-dir>/local/<word>/, the same layout and record format the
training pipeline ingests. Uploads are repaired (stripped RIFF preambles),
resampled to the canonical rate, QC-flagged, and parked in a pending state
until a human review approves or rejects them. All manifest writes funnel
through one lock; audio lands on disk (fsynced) before its record is
appended, so the manifest never points at a missing file.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path

from fastapi import FastAPI, Form, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from .audio_io import (CANONICAL_RATE, MalformedHeader, Unrepairable,
                       UnsupportedEncoding, decode_wav, encode_wav, repair_riff,
                       resample)
from .corpus import (LabelSet, Manifest, QcPolicy, SampleRecord,
                     builtin_labelset, validate_clip)

REVIEW_REASONS = ("wrong_word", "incomplete_word", "other")


class RecordingStore:
    """Manifest plus flat files; one serialized writer, snapshot reads."""

    def __init__(self, data_dir: Path, labelset: LabelSet | None = None,
                 qc_policy: QcPolicy | None = None):
        self.data_dir = Path(data_dir)
        self.labelset = labelset or builtin_labelset()
        self.qc_policy = qc_policy or QcPolicy()
        self.manifest_path = self.data_dir / "manifest.jsonl"
        self._lock = threading.Lock()
        self.data_dir.mkdir(parents=True, exist_ok=True)
        if self.manifest_path.exists():
            self.manifest = Manifest.load(self.manifest_path)
        else:
            self.manifest = Manifest()
        self._checksums = {r.checksum for r in self.manifest}

    def has_checksum(self, checksum: str) -> bool:
        with self._lock:
            return checksum in self._checksums

    def add_recording(self, record: SampleRecord, payload: bytes) -> None:
        """Persist audio first (fsync), then append the manifest line."""
        path = self.data_dir / record.path
        path.parent.mkdir(parents=True, exist_ok=True)
        with self._lock:
            if record.checksum in self._checksums:
                raise FileExistsError(record.checksum)
            with open(path, "wb") as fh:
                fh.write(payload)
                fh.flush()
                os.fsync(fh.fileno())
            with open(self.manifest_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self.manifest.records.append(record)
            self._checksums.add(record.checksum)

    def review(self, record_id: str, verdict: str, reason: str | None) -> SampleRecord:
        with self._lock:
            record = self.manifest.by_id(record_id)
            record.split = "train" if verdict == "approved" else "excluded"
            record.extra["review"] = {"verdict": verdict}
            if reason:
                record.extra["review"]["reason"] = reason
            tmp = self.manifest_path.with_suffix(".tmp")
            self.manifest.save(tmp)
            tmp.replace(self.manifest_path)
            return record

    def counts_by_label(self) -> dict[str, int]:
        with self._lock:
            counts: dict[str, int] = {}
            for r in self.manifest:
                if r.split != "excluded":
                    counts[r.label] = counts.get(r.label, 0) + 1
            return counts

    def snapshot(self) -> list[SampleRecord]:
        with self._lock:
            return list(self.manifest.records)


def _bad_request(message: str, status: int = 400) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def create_app(data_dir: str | Path, ui_origin: str = "*",
               review_token: str | None = None,
               ui_dir: str | Path | None = None) -> FastAPI:
    store = RecordingStore(Path(data_dir))
    labelset = store.labelset
    app = FastAPI(title="hakw collection service")
    app.state.store = store
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[ui_origin] if ui_origin != "*" else ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def review_allowed(request: Request) -> bool:
        if not review_token:
            return True
        supplied = request.headers.get("x-review-token") \
            or request.query_params.get("token")
        return supplied == review_token

    @app.get("/api/words")
    def words():
        counts = store.counts_by_label()
        return [{"id": k.id, "english": k.english, "kinyarwanda": k.kinyarwanda,
                 "label": k.label, "collected_count": counts.get(k.label, 0)}
                for k in labelset.keywords]

    @app.post("/api/recordings", status_code=201)
    def upload(audio: UploadFile | None = None,
               word_id: str = Form(None),
               speaker_code: str = Form(None),
               consent: str = Form(None),
               device_hint: str = Form(None)):
        if audio is None:
            return _bad_request("missing field: audio")
        if word_id is None:
            return _bad_request("missing field: word_id")
        if speaker_code is None or not speaker_code.strip():
            return _bad_request("missing field: speaker_code")
        if any(ch.isspace() for ch in speaker_code):
            return _bad_request("speaker_code must not contain whitespace")
        if consent is None:
            return _bad_request("missing field: consent")
        try:
            word = labelset.by_id(int(word_id))
        except (ValueError, KeyError):
            return _bad_request(f"invalid word_id: {word_id!r}")
        if consent.strip().lower() not in ("true", "1", "yes"):
            return _bad_request("consent must be true for storage", status=422)
        raw = audio.file.read()
        try:
            clip = decode_wav(repair_riff(raw))
        except (MalformedHeader, UnsupportedEncoding, Unrepairable) as exc:
            return _bad_request(f"undecodable audio: {exc}", status=415)
        if clip.sample_rate != CANONICAL_RATE:
            clip = resample(clip, CANONICAL_RATE)
        payload = encode_wav(clip)
        checksum = hashlib.sha256(payload).hexdigest()
        if store.has_checksum(checksum):
            return _bad_request("duplicate recording", status=409)
        qc_flags = validate_clip(clip, store.qc_policy)
        record = SampleRecord(
            id="rec-" + checksum[:16],
            path=f"local/{word.label}/{speaker_code}__{checksum[:12]}.wav",
            label=word.label,
            speaker=speaker_code,
            source="local",
            duration_ms=clip.duration_ms,
            sample_rate=clip.sample_rate,
            qc_flags=qc_flags,
            split="pending",
            checksum=checksum,
            extra={"device_hint": device_hint} if device_hint else {},
        )
        try:
            store.add_recording(record, payload)
        except FileExistsError:
            return _bad_request("duplicate recording", status=409)
        return {"id": record.id, "qc_flags": sorted(f.value for f in qc_flags)}

    @app.post("/api/recordings/{record_id}/review")
    def review(record_id: str, decision: dict, request: Request):
        if not review_allowed(request):
            return _bad_request("review token required", status=403)
        verdict = decision.get("verdict")
        if verdict not in ("approved", "rejected"):
            return _bad_request(f"bad verdict: {verdict!r}")
        reason = decision.get("reason")
        if reason is not None and reason not in REVIEW_REASONS:
            return _bad_request(f"bad reason: {reason!r}")
        try:
            record = store.review(record_id, verdict, reason)
        except KeyError:
            return _bad_request("unknown recording id", status=404)
        return {"id": record.id, "status": verdict, "split": record.split}

    @app.get("/api/recordings")
    def recordings(status: str = "all"):
        rows = []
        for r in store.snapshot():
            review_state = r.extra.get("review", {})
            state = review_state.get("verdict", "pending" if r.split == "pending"
                                     else r.split)
            if status != "all" and state != status:
                continue
            rows.append({
                "id": r.id, "label": r.label, "speaker": r.speaker,
                "duration_ms": r.duration_ms,
                "qc_flags": sorted(f.value for f in r.qc_flags),
                "status": state,
            })
        return rows

    @app.get("/api/recordings/{record_id}/audio")
    def audio_file(record_id: str):
        try:
            record = store.manifest.by_id(record_id)
        except KeyError:
            return _bad_request("unknown recording id", status=404)
        payload = (store.data_dir / record.path).read_bytes()
        return Response(payload, media_type="audio/wav")

    @app.get("/api/stats")
    def stats():
        records = store.snapshot()
        per_word = {k.label: 0 for k in labelset.keywords}
        total_bytes = 0
        for r in records:
            if r.split != "excluded" and r.label in per_word:
                per_word[r.label] += 1
            path = store.data_dir / r.path
            if path.exists():
                total_bytes += path.stat().st_size
        return {
            "per_word_counts": per_word,
            "total_speakers": len({r.speaker for r in records}),
            "total_bytes": total_bytes,
            "pending_review": sum(1 for r in records if r.split == "pending"),
        }

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
