"""WAV ingest, sample-rate conversion, and utterance segmentation.

Audio enters as RIFF/WAVE PCM (integer 8/16/24/32-bit or 32-bit float),
is normalized to floats in [-1, 1], and averaged to mono.  Compressed
inputs are not decoded here: a configurable external decoder command
(see :class:`AudioPipelineConfig.decoder_command`) must produce PCM WAV
first, and the command is recorded so a replay can repeat it.

Sample-rate conversion is polyphase windowed-sinc filtering with fixed
constants (Kaiser window, beta 7.857, 64 zero crossings per side, about
80 dB stopband).  The constants are never tuned at run time, so equal
inputs give equal outputs everywhere.

Segments are cut purely by each row's own timestamps, slicing samples
floor(start_ms*rate/1000) .. floor(end_ms*rate/1000).  Investigator
trim intervals never modify segment content (that would silently delete
overlapped participant speech); they are excised only by the separate
whole-file :func:`render_trimmed`.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.signal import resample_poly

from .chat import TimeInterval
from .errors import (
    ManifestSchemaError,
    NotRiff,
    TruncatedData,
    UnsupportedEncoding,
)
from .fileio import atomic_write_bytes, atomic_write_text
from .textnorm import UtteranceRow


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Immutable mono float signal in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        if not isinstance(self.sample_rate_hz, int) or self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be a positive integer")
        samples = np.array(self.samples, dtype=np.float64, copy=True)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional (mono)")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def channels(self) -> int:
        return 1

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


# --- RIFF/WAVE I/O ---

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


def _looks_like_mp3(head: bytes) -> bool:
    if head[:3] == b"ID3":
        return True
    return len(head) >= 2 and head[0] == 0xFF and (head[1] & 0xE0) == 0xE0


def _whole_items(data: bytes, itemsize: int) -> bytes:
    return data[: (len(data) // itemsize) * itemsize]


def _decode_pcm(data: bytes, bits: int, fmt: int) -> np.ndarray:
    if fmt == _WAVE_FORMAT_IEEE_FLOAT:
        if bits != 32:
            raise UnsupportedEncoding(f"{bits}-bit float WAV is not supported")
        return np.frombuffer(_whole_items(data, 4), dtype="<f4").astype(np.float64)
    if fmt != _WAVE_FORMAT_PCM:
        raise UnsupportedEncoding(f"WAV format tag 0x{fmt:04x} is not PCM or float")
    if bits == 8:
        # 8-bit WAV is unsigned with midpoint 128
        return (np.frombuffer(data, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    if bits == 16:
        return np.frombuffer(_whole_items(data, 2), dtype="<i2").astype(np.float64) / 32768.0
    if bits == 24:
        raw = np.frombuffer(_whole_items(data, 3), dtype=np.uint8)
        raw = raw.reshape(-1, 3).astype(np.int64)
        value = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        value -= (value & 0x800000) << 1  # sign-extend
        return value.astype(np.float64) / float(1 << 23)
    if bits == 32:
        return np.frombuffer(_whole_items(data, 4), dtype="<i4").astype(np.float64) / float(1 << 31)
    raise UnsupportedEncoding(f"{bits}-bit PCM WAV is not supported")


def read_wav(path: str | Path) -> AudioBuffer:
    """Read a PCM or float WAV file into a normalized mono buffer."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != b"RIFF":
        if _looks_like_mp3(blob[:4]):
            raise UnsupportedEncoding(
                f"{path} looks like MP3; run the configured external decoder "
                "(decoder_command) to produce PCM WAV first"
            )
        raise NotRiff(f"{path} is not a RIFF file")
    if blob[8:12] != b"WAVE":
        raise NotRiff(f"{path} is RIFF but not WAVE")

    fmt_tag = channels = rate = bits = None
    data: Optional[bytes] = None
    offset = 12
    while offset + 8 <= len(blob):
        chunk_id = blob[offset : offset + 4]
        (size,) = struct.unpack_from("<I", blob, offset + 4)
        body = blob[offset + 8 : offset + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise TruncatedData(f"{path}: fmt chunk shorter than 16 bytes")
            fmt_tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", body, 0)
            if fmt_tag == _WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 26:
                    raise TruncatedData(f"{path}: extensible fmt chunk too short")
                (fmt_tag,) = struct.unpack_from("<H", body, 24)
        elif chunk_id == b"data":
            if len(body) < size:
                raise TruncatedData(
                    f"{path}: data chunk declares {size} bytes, file holds {len(body)}"
                )
            data = body
        offset += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt_tag is None:
        raise NotRiff(f"{path} has no fmt chunk")
    if data is None:
        raise TruncatedData(f"{path} has no data chunk")
    if channels < 1:
        raise UnsupportedEncoding(f"{path} declares {channels} channels")

    samples = _decode_pcm(data, bits, fmt_tag)
    frames = samples.size // channels
    samples = samples[: frames * channels]
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return AudioBuffer(samples=samples, sample_rate_hz=int(rate))


def write_wav(path: str | Path, buf: AudioBuffer) -> Path:
    """Write 16-bit PCM mono, whatever the internal float content was."""
    pcm = np.clip(np.rint(buf.samples * 32768.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH",
        16,
        _WAVE_FORMAT_PCM,
        1,
        buf.sample_rate_hz,
        buf.sample_rate_hz * 2,
        2,
        16,
    )
    header += b"data" + struct.pack("<I", len(data))
    return atomic_write_bytes(path, header + data)


# --- resampling ---

_ZERO_CROSSINGS = 64
_KAISER_BETA = 7.857  # ~80 dB stopband


def _sinc_kernel(up: int, down: int) -> np.ndarray:
    # Cutoff at the tighter of the two Nyquist rates; resample_poly
    # scales array windows by `up` itself, so no gain factor here.
    m = max(up, down)
    half = _ZERO_CROSSINGS * m
    n = np.arange(-half, half + 1)
    return np.sinc(n / m) / m * np.kaiser(2 * half + 1, _KAISER_BETA)


def resample(buf: AudioBuffer, target_hz: int) -> AudioBuffer:
    """Band-limited rate conversion; identity rate returns the same buffer."""
    if not isinstance(target_hz, int) or target_hz <= 0:
        raise ValueError("target_hz must be a positive integer")
    if target_hz == buf.sample_rate_hz:
        return buf
    divisor = math.gcd(buf.sample_rate_hz, target_hz)
    up = target_hz // divisor
    down = buf.sample_rate_hz // divisor
    out = resample_poly(buf.samples, up, down, window=_sinc_kernel(up, down))
    return AudioBuffer(samples=out, sample_rate_hz=target_hz)


# --- segmentation ---


@dataclass(eq=False)
class Segment:
    uid: str
    utt_index: int
    audio: AudioBuffer


@dataclass(eq=False)
class SegmentationResult:
    """Segments plus the skip/clip tallies the caller should report."""

    segments: list[Segment]
    skipped_untimed: list[tuple[str, int]]
    clipped: list[tuple[str, int]]
    trim_overlaps: int  # segments whose span intersects a trim interval


def sample_index(ms: int, rate_hz: int) -> int:
    return (ms * rate_hz) // 1000


def segment_by_transcript(
    buf: AudioBuffer,
    rows: Sequence[UtteranceRow],
    trim: Iterable[TimeInterval] = (),
) -> SegmentationResult:
    """Cut one segment per fully timestamped row.

    Rows without timestamps are skipped and tallied, not errors.  A row
    ending past the audio is clipped to the buffer and tallied.  Trim
    intervals are only counted when they intersect a segment; content
    is never zeroed or cut inside a segment (see module docstring).
    """
    trim = list(trim)
    rate = buf.sample_rate_hz
    total = buf.samples.size
    segments: list[Segment] = []
    skipped: list[tuple[str, int]] = []
    clipped: list[tuple[str, int]] = []
    overlaps = 0
    for row in rows:
        if row.start_ms is None or row.end_ms is None:
            skipped.append((row.uid, row.utt_index))
            continue
        start = sample_index(row.start_ms, rate)
        end = sample_index(row.end_ms, rate)
        if end > total:
            clipped.append((row.uid, row.utt_index))
            end = total
            start = min(start, total)
        if any(iv.start_ms < row.end_ms and row.start_ms < iv.end_ms for iv in trim):
            overlaps += 1
        segments.append(
            Segment(
                uid=row.uid,
                utt_index=row.utt_index,
                audio=AudioBuffer(samples=buf.samples[start:end], sample_rate_hz=rate),
            )
        )
    return SegmentationResult(
        segments=segments, skipped_untimed=skipped, clipped=clipped, trim_overlaps=overlaps
    )


def render_trimmed(buf: AudioBuffer, trim: Iterable[TimeInterval]) -> AudioBuffer:
    """Whole-file render with the trim intervals excised."""
    rate = buf.sample_rate_hz
    total = buf.samples.size
    cuts = []
    for iv in trim:
        start = min(sample_index(iv.start_ms, rate), total)
        end = min(sample_index(iv.end_ms, rate), total)
        if end > start:
            cuts.append((start, end))
    cuts.sort()
    kept = []
    cursor = 0
    for start, end in cuts:
        if start > cursor:
            kept.append(buf.samples[cursor:start])
        cursor = max(cursor, end)
    if cursor < total:
        kept.append(buf.samples[cursor:])
    joined = np.concatenate(kept) if kept else np.zeros(0)
    return AudioBuffer(samples=joined, sample_rate_hz=rate)


def segment_filename(uid: str, utt_index: int) -> str:
    return f"{uid}_{utt_index}.wav"


# --- pipeline config ---

_AUDIO_KEYS = (
    "dataset",
    "input_path",
    "segment_output_path",
    "target_sample_rate_hz",
    "feature_method",
    "feature_order",
    "scale_mfcc",
    "decoder_command",
)
_METHODS = ("FFT", "MFCC", "NONE")


def is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass
class AudioPipelineConfig:
    """Switches for the audio pipeline, in prompt order.

    feature_order is the FFT window size in samples, or the MFCC
    coefficient count, and must be 0 exactly when feature_method is
    NONE.  decoder_command is an external command template (supports
    {input} and {output} placeholders) for compressed sources; empty
    means none configured.
    """

    dataset: str = "db"
    input_path: str = ""
    segment_output_path: str = ""
    target_sample_rate_hz: int = 16000
    feature_method: str = "NONE"
    feature_order: int = 0
    scale_mfcc: bool = False
    decoder_command: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.dataset not in ("db", "wls"):
            raise ManifestSchemaError(
                f"dataset must be one of ['db', 'wls'], got {self.dataset!r}"
            )
        if self.feature_method not in _METHODS:
            raise ManifestSchemaError(
                f"feature_method must be one of {list(_METHODS)}, got {self.feature_method!r}"
            )
        if (
            not isinstance(self.target_sample_rate_hz, int)
            or isinstance(self.target_sample_rate_hz, bool)
            or self.target_sample_rate_hz <= 0
        ):
            raise ManifestSchemaError("target_sample_rate_hz must be a positive integer")
        if not isinstance(self.feature_order, int) or isinstance(self.feature_order, bool):
            raise ManifestSchemaError("feature_order must be an integer")
        if self.feature_method == "NONE":
            if self.feature_order != 0:
                raise ManifestSchemaError("feature_order must be 0 when feature_method is NONE")
        elif self.feature_method == "FFT":
            if not is_power_of_two(self.feature_order):
                raise ManifestSchemaError(
                    f"FFT window size must be a power of two >= 2, got {self.feature_order}"
                )
        else:
            if not 1 <= self.feature_order <= 40:
                raise ManifestSchemaError(
                    f"MFCC coefficient count must be in [1, 40], got {self.feature_order}"
                )

    @classmethod
    def from_dict(cls, data: object) -> "AudioPipelineConfig":
        if not isinstance(data, dict):
            raise ManifestSchemaError("audio config must be a JSON object")
        unknown = sorted(set(data) - set(_AUDIO_KEYS))
        missing = sorted(set(_AUDIO_KEYS) - set(data))
        if unknown:
            raise ManifestSchemaError("unknown audio config keys: " + ", ".join(unknown))
        if missing:
            raise ManifestSchemaError("missing audio config keys: " + ", ".join(missing))
        values = dict(data)
        method = values.get("feature_method")
        if isinstance(method, str):
            method = method.upper()
            if method == "FTT":  # accepted alias seen in legacy configs
                method = "FFT"
            values["feature_method"] = method
        for key in ("input_path", "segment_output_path", "decoder_command"):
            if not isinstance(values[key], str):
                raise ManifestSchemaError(f"{key} must be a string")
        if not isinstance(values["scale_mfcc"], bool):
            raise ManifestSchemaError("scale_mfcc must be true or false")
        return cls(**values)

    def to_dict(self) -> dict:
        return {key: getattr(self, key) for key in _AUDIO_KEYS}

    @classmethod
    def from_json_file(cls, path: str | Path) -> "AudioPipelineConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ManifestSchemaError(f"cannot read audio config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_json_file(self, path: str | Path) -> Path:
        return atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")
