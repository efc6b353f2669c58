"""WAV decoding, RIFF repair, and clip conditioning.

Everything downstream operates on mono float clips in [-1, 1]. The canonical
on-disk format is little-endian RIFF/WAVE, PCM format 1, 16-bit; the canonical
writer emits a plain 44-byte header with no extension chunks.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

CANONICAL_RATE = 16000
_PCM_SCALE = 32768.0


class MalformedHeader(ValueError):
    """Input is not a parseable RIFF/WAVE container."""


class UnsupportedEncoding(ValueError):
    """Container is valid but not PCM 16-bit."""


class Unrepairable(ValueError):
    """No recognizable fmt chunk found while scanning damaged bytes."""


class InvalidRate(ValueError):
    """Requested sample rate is not positive."""


@dataclass
class AudioClip:
    """Mono float samples in [-1, 1] at a fixed sample rate.

    Clips are treated as immutable values; operations return new clips.
    """

    samples: np.ndarray
    sample_rate: int
    source_id: str | None = None

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            raise InvalidRate(f"sample_rate must be positive, got {self.sample_rate}")
        self.samples = np.asarray(self.samples, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_ms(self) -> int:
        return int(round(1000 * len(self.samples) / self.sample_rate))


@dataclass
class WavInfo:
    """Parsed fmt/data facts of a WAV container."""

    channels: int
    bits_per_sample: int
    sample_rate: int
    data_length: int
    data_offset: int = field(default=0, repr=False)


def _iter_chunks(data: bytes, offset: int):
    """Yield (chunk_id, declared_size, payload_offset) from a RIFF chunk stream."""
    pos = offset
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        yield cid, size, pos + 8
        pos += 8 + size + (size & 1)


def _parse_wav(data: bytes) -> WavInfo:
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedHeader("missing RIFF/WAVE preamble")
    fmt = None
    data_span = None
    for cid, size, payload in _iter_chunks(data, 12):
        if cid == b"fmt " and fmt is None:
            if size < 16 or payload + 16 > len(data):
                raise MalformedHeader("truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", data, payload)
        elif cid == b"data" and data_span is None:
            avail = len(data) - payload
            data_span = (payload, min(size, avail))
    if fmt is None:
        raise MalformedHeader("no fmt chunk")
    if data_span is None:
        raise MalformedHeader("no data chunk")
    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if audio_format != 1:
        raise UnsupportedEncoding(f"audio format {audio_format}, expected PCM (1)")
    if bits != 16:
        raise UnsupportedEncoding(f"{bits}-bit samples, expected 16")
    if channels < 1 or rate <= 0:
        raise MalformedHeader(f"implausible fmt fields: channels={channels} rate={rate}")
    frame_bytes = channels * 2
    offset, length = data_span
    length -= length % frame_bytes
    return WavInfo(channels=channels, bits_per_sample=16, sample_rate=rate,
                   data_length=length, data_offset=offset)


def decode_wav(data: bytes, source_id: str | None = None) -> AudioClip:
    """Decode PCM 16-bit WAV bytes into a mono clip.

    Multi-channel input is mixed down by the arithmetic mean of channels;
    integer samples map to float by dividing by 32768.
    """
    info = _parse_wav(data)
    raw = data[info.data_offset : info.data_offset + info.data_length]
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _PCM_SCALE
    if info.channels > 1:
        pcm = pcm.reshape(-1, info.channels).mean(axis=1)
    return AudioClip(samples=pcm, sample_rate=info.sample_rate, source_id=source_id)


def encode_wav(clip: AudioClip) -> bytes:
    """Serialize a clip as canonical mono PCM16 WAV (44-byte header)."""
    q = np.clip(np.round(clip.samples * _PCM_SCALE), -32768, 32767).astype("<i2")
    payload = q.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, 1, clip.sample_rate, clip.sample_rate * 2, 2, 16,
        b"data", len(payload),
    )
    return header + payload


def _rebuild_from(data: bytes, start: int) -> bytes | None:
    """Reassemble a WAV from the chunk stream starting at a fmt chunk."""
    if start + 24 > len(data):
        return None
    (fmt_size,) = struct.unpack_from("<I", data, start + 4)
    if fmt_size < 16 or fmt_size > 1024:
        return None
    audio_format, channels, rate, _br, _ba, bits = struct.unpack_from("<HHIIHH", data, start + 8)
    if audio_format != 1 or bits != 16 or channels < 1 or channels > 8 or not (1 <= rate <= 768000):
        return None
    chunks: list[bytes] = []
    pos = start
    saw_data = False
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        avail = len(data) - pos - 8
        if size > avail:
            if cid != b"data":
                return None
            # data chunk truncated or its size field lost its meaning: keep
            # whatever whole frames remain and fix the size field.
            size = avail - avail % (channels * 2)
            chunks.append(cid + struct.pack("<I", size) + data[pos + 8 : pos + 8 + size])
            saw_data = True
            break
        chunks.append(data[pos : pos + 8 + size + (size & 1)])
        saw_data = saw_data or cid == b"data"
        pos += 8 + size + (size & 1)
    if not saw_data:
        return None
    body = b"".join(chunks)
    return b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body


def repair_riff(data: bytes) -> bytes:
    """Restore a WAV whose RIFF/WAVE preamble was stripped.

    Valid input passes through byte-identical. Otherwise the bytes are scanned
    for a surviving fmt chunk, the 12-byte preamble is rebuilt, and chunk sizes
    recomputed. Repaired output always decodes; PCM content is untouched.
    """
    try:
        _parse_wav(data)
        return data
    except (MalformedHeader, UnsupportedEncoding):
        pass
    search = 0
    while True:
        start = data.find(b"fmt ", search)
        if start < 0:
            raise Unrepairable("no recognizable fmt chunk found")
        rebuilt = _rebuild_from(data, start)
        if rebuilt is not None:
            try:
                _parse_wav(rebuilt)
                return rebuilt
            except (MalformedHeader, UnsupportedEncoding):
                pass
        search = start + 1


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Resample by linear interpolation to target_rate.

    Output length is floor(len * target_rate / source_rate). Adequate for
    speech keyword work; swap in a polyphase resampler if fidelity matters.
    """
    if target_rate <= 0:
        raise InvalidRate(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    n = len(clip.samples)
    m = (n * target_rate) // clip.sample_rate
    if n == 0 or m == 0:
        return AudioClip(np.zeros(m), target_rate, clip.source_id)
    positions = np.arange(m) * (clip.sample_rate / target_rate)
    out = np.interp(positions, np.arange(n), clip.samples)
    return AudioClip(np.clip(out, -1.0, 1.0), target_rate, clip.source_id)


def pad_or_trim(clip: AudioClip, target_len: int) -> AudioClip:
    """Zero-pad symmetrically (extra sample on the right) or center-crop."""
    if target_len <= 0:
        raise ValueError(f"target_len must be positive, got {target_len}")
    n = len(clip.samples)
    if n == target_len:
        return clip
    if n < target_len:
        deficit = target_len - n
        left = deficit // 2
        out = np.concatenate([np.zeros(left), clip.samples, np.zeros(deficit - left)])
    else:
        left = (n - target_len) // 2
        out = clip.samples[left : left + target_len].copy()
    return AudioClip(out, clip.sample_rate, clip.source_id)
