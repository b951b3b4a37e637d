import math
import struct

import numpy as np
import pytest

from chatprep.audio import (
    AudioBuffer,
    AudioPipelineConfig,
    read_wav,
    render_trimmed,
    resample,
    sample_index,
    segment_by_transcript,
    segment_filename,
    write_wav,
)
from chatprep.chat import TimeInterval
from chatprep.errors import (
    ManifestSchemaError,
    NotRiff,
    TruncatedData,
    UnsupportedEncoding,
)
from chatprep.textnorm import UtteranceRow


def wav_bytes(payload, fmt_tag=1, channels=1, rate=16000, bits=16, declared_size=None,
              fmt_body=None, include_data=True):
    """Hand-rolled WAV container so the reader is tested against raw bytes."""
    if fmt_body is None:
        block = channels * bits // 8
        fmt_body = struct.pack("<HHIIHH", fmt_tag, channels, rate, rate * block, block, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt_body)) + fmt_body
    if len(fmt_body) & 1:
        chunks += b"\x00"
    if include_data:
        size = len(payload) if declared_size is None else declared_size
        chunks += b"data" + struct.pack("<I", size) + payload
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def row(uid="u", idx=0, start=None, end=None):
    return UtteranceRow(uid=uid, visit=0, speaker="PAR", utt_index=idx,
                        start_ms=start, end_ms=end, text="t")


# --- read_wav ---


def test_16bit_normalization(tmp_path):
    payload = struct.pack("<3h", 0, 16384, -32768)
    path = tmp_path / "a.wav"
    path.write_bytes(wav_bytes(payload))
    buf = read_wav(path)
    assert buf.sample_rate_hz == 16000
    assert np.allclose(buf.samples, [0.0, 0.5, -1.0], atol=1 / 32768)


def test_8bit_is_unsigned(tmp_path):
    payload = bytes([128, 255, 0])
    path = tmp_path / "a.wav"
    path.write_bytes(wav_bytes(payload, bits=8))
    buf = read_wav(path)
    assert np.allclose(buf.samples, [0.0, 127 / 128, -1.0])


def test_24bit_sign_extension(tmp_path):
    vals = [0, (1 << 23) - 1, -(1 << 23), -1]
    payload = b"".join(struct.pack("<i", v)[:3] for v in vals)
    path = tmp_path / "a.wav"
    path.write_bytes(wav_bytes(payload, bits=24))
    buf = read_wav(path)
    expect = [0.0, ((1 << 23) - 1) / (1 << 23), -1.0, -1 / (1 << 23)]
    assert np.allclose(buf.samples, expect)


def test_32bit_int_and_float(tmp_path):
    path = tmp_path / "i.wav"
    path.write_bytes(wav_bytes(struct.pack("<2i", (1 << 31) - 1, -(1 << 31)), bits=32))
    buf = read_wav(path)
    assert np.allclose(buf.samples, [((1 << 31) - 1) / (1 << 31), -1.0])

    path2 = tmp_path / "f.wav"
    path2.write_bytes(wav_bytes(struct.pack("<2f", 0.5, -0.25), fmt_tag=3, bits=32))
    buf2 = read_wav(path2)
    assert np.allclose(buf2.samples, [0.5, -0.25])


def test_stereo_averaged_after_normalize(tmp_path):
    # interleaved L/R: (16384, 0) then (-16384, 16384)
    payload = struct.pack("<4h", 16384, 0, -16384, 16384)
    path = tmp_path / "s.wav"
    path.write_bytes(wav_bytes(payload, channels=2))
    buf = read_wav(path)
    assert buf.channels == 1
    assert np.allclose(buf.samples, [0.25, 0.0])


def test_extensible_wraps_pcm(tmp_path):
    sub = struct.pack("<H", 1) + b"\x00" * 14
    fmt_body = struct.pack("<HHIIHH", 0xFFFE, 1, 16000, 32000, 2, 16)
    fmt_body += struct.pack("<HHI", 22, 16, 0x4) + sub
    payload = struct.pack("<2h", 16384, -16384)
    path = tmp_path / "x.wav"
    path.write_bytes(wav_bytes(payload, fmt_body=fmt_body))
    assert np.allclose(read_wav(path).samples, [0.5, -0.5])


def test_mp3_hint_mentions_decoder(tmp_path):
    for head in (b"ID3\x03\x00rest", bytes([0xFF, 0xFB, 0x90, 0x00]) + b"junk"):
        path = tmp_path / "m.bin"
        path.write_bytes(head)
        with pytest.raises(UnsupportedEncoding, match="decoder"):
            read_wav(path)


def test_not_riff(tmp_path):
    path = tmp_path / "n.bin"
    path.write_bytes(b"JUNKJUNKJUNKJUNK")
    with pytest.raises(NotRiff):
        read_wav(path)
    path.write_bytes(b"RIFF\x04\x00\x00\x00AVI ")
    with pytest.raises(NotRiff):
        read_wav(path)


def test_truncated_data_chunk(tmp_path):
    path = tmp_path / "t.wav"
    path.write_bytes(wav_bytes(b"\x00\x00", declared_size=100))
    with pytest.raises(TruncatedData):
        read_wav(path)


def test_missing_chunks(tmp_path):
    path = tmp_path / "nofmt.wav"
    payload = b"data" + struct.pack("<I", 2) + b"\x00\x00"
    path.write_bytes(b"RIFF" + struct.pack("<I", 4 + len(payload)) + b"WAVE" + payload)
    with pytest.raises(NotRiff, match="fmt"):
        read_wav(path)
    path2 = tmp_path / "nodata.wav"
    path2.write_bytes(wav_bytes(b"", include_data=False))
    with pytest.raises(TruncatedData, match="data"):
        read_wav(path2)


def test_compressed_format_tag_unsupported(tmp_path):
    path = tmp_path / "alaw.wav"
    path.write_bytes(wav_bytes(b"\x00\x00", fmt_tag=6))
    with pytest.raises(UnsupportedEncoding):
        read_wav(path)


def test_odd_bit_depth_unsupported(tmp_path):
    path = tmp_path / "b12.wav"
    path.write_bytes(wav_bytes(b"\x00\x00", bits=12))
    with pytest.raises(UnsupportedEncoding):
        read_wav(path)


def test_write_read_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    samples = rng.uniform(-1, 1, 2048)
    buf = AudioBuffer(samples=samples, sample_rate_hz=22050)
    path = tmp_path / "rt.wav"
    write_wav(path, buf)
    again = read_wav(path)
    assert again.sample_rate_hz == 22050
    assert np.abs(again.samples - samples).max() <= 1 / 32768


def test_write_clips_out_of_range(tmp_path):
    buf = AudioBuffer(samples=np.array([1.5, -1.5]), sample_rate_hz=8000)
    path = tmp_path / "c.wav"
    write_wav(path, buf)
    again = read_wav(path)
    assert np.allclose(again.samples, [32767 / 32768, -1.0])


def test_write_is_byte_deterministic(tmp_path):
    buf = AudioBuffer(samples=np.linspace(-0.5, 0.5, 777), sample_rate_hz=16000)
    a, b = tmp_path / "a.wav", tmp_path / "b.wav"
    write_wav(a, buf)
    write_wav(b, buf)
    assert a.read_bytes() == b.read_bytes()


# --- AudioBuffer ---


def test_buffer_is_immutable_and_copied():
    src = np.zeros(4)
    buf = AudioBuffer(samples=src, sample_rate_hz=8000)
    src[0] = 9.0
    assert buf.samples[0] == 0.0
    with pytest.raises(ValueError):
        buf.samples[0] = 1.0


def test_buffer_validation():
    with pytest.raises(ValueError):
        AudioBuffer(samples=np.zeros(4), sample_rate_hz=0)
    with pytest.raises(ValueError):
        AudioBuffer(samples=np.zeros((2, 2)), sample_rate_hz=8000)
    assert AudioBuffer(samples=np.zeros(8000), sample_rate_hz=8000).duration_s == 1.0


# --- resample ---


def test_identity_rate_returns_same_buffer():
    buf = AudioBuffer(samples=np.zeros(10), sample_rate_hz=16000)
    assert resample(buf, 16000) is buf


def test_tone_survives_441_to_16k():
    t = np.arange(44100) / 44100
    buf = AudioBuffer(samples=0.5 * np.sin(2 * np.pi * 440 * t), sample_rate_hz=44100)
    out = resample(buf, 16000)
    assert abs(len(out) - 16000) <= 1
    spectrum = np.abs(np.fft.rfft(out.samples))
    peak_hz = np.argmax(spectrum) * 16000 / len(out)
    assert abs(peak_hz - 440.0) <= 16000 / len(out)  # within one bin


def test_dc_gain():
    buf = AudioBuffer(samples=np.full(8000, 0.25), sample_rate_hz=8000)
    out = resample(buf, 16000)
    interior = out.samples[400:-400]  # skip filter edge ripple
    assert np.abs(interior - 0.25).max() < 1e-3


def test_round_trip_error_energy():
    r = 16000
    t = np.arange(r) / r
    x = 0.5 * np.sin(2 * np.pi * (r / 8) * t)
    back = resample(resample(AudioBuffer(samples=x, sample_rate_hz=r), 2 * r), r)
    n = min(len(back), r)
    err = back.samples[:n] - x[:n]
    db = 10 * np.log10((err ** 2).sum() / (x ** 2).sum())
    assert db <= -40


def test_linearity():
    rng = np.random.default_rng(3)
    x = rng.uniform(-0.5, 0.5, 4000)
    a = resample(AudioBuffer(samples=x, sample_rate_hz=8000), 11025)
    b = resample(AudioBuffer(samples=2.5 * x, sample_rate_hz=8000), 11025)
    scale = np.abs(2.5 * a.samples).max()
    assert np.abs(b.samples - 2.5 * a.samples).max() <= 1e-6 * scale


@pytest.mark.parametrize(
    "n,src,dst",
    [(44100, 44100, 16000), (12345, 8000, 11025), (16000, 16000, 8000), (999, 44100, 48000)],
)
def test_output_length_formula(n, src, dst):
    buf = AudioBuffer(samples=np.zeros(n), sample_rate_hz=src)
    out = resample(buf, dst)
    assert abs(len(out) - round(n * dst / src)) <= 1


def test_resample_rejects_bad_rate():
    buf = AudioBuffer(samples=np.zeros(10), sample_rate_hz=8000)
    with pytest.raises(ValueError):
        resample(buf, 0)


# --- segmentation ---


def test_segment_sample_arithmetic():
    buf = AudioBuffer(samples=np.arange(160000) / 160000.0, sample_rate_hz=16000)
    result = segment_by_transcript(buf, [row(start=2581, end=3426)])
    seg = result.segments[0].audio
    assert len(seg) == 13520
    assert sample_index(2581, 16000) == 41296
    assert np.array_equal(seg.samples, buf.samples[41296:54816])
    assert result.skipped_untimed == [] and result.clipped == []


def test_untimed_rows_skipped_and_tallied():
    buf = AudioBuffer(samples=np.zeros(16000), sample_rate_hz=16000)
    rows = [row(idx=0, start=0, end=100), row(idx=1), row(idx=2, start=None, end=500)]
    result = segment_by_transcript(buf, rows)
    assert len(result.segments) == 1
    assert result.skipped_untimed == [("u", 1), ("u", 2)]


def test_end_beyond_audio_clips_with_warning():
    buf = AudioBuffer(samples=np.ones(8000), sample_rate_hz=16000)  # 500 ms
    result = segment_by_transcript(buf, [row(start=400, end=900)])
    assert result.clipped == [("u", 0)]
    seg = result.segments[0].audio
    assert len(seg) == 8000 - sample_index(400, 16000)


def test_zero_rows_zero_segments():
    buf = AudioBuffer(samples=np.zeros(100), sample_rate_hz=16000)
    result = segment_by_transcript(buf, [])
    assert result.segments == []


def test_trim_never_alters_segment_content():
    buf = AudioBuffer(samples=np.ones(16000), sample_rate_hz=16000)
    trim = [TimeInterval(start_ms=100, end_ms=200)]
    result = segment_by_transcript(buf, [row(start=50, end=400)], trim)
    assert np.all(result.segments[0].audio.samples == 1.0)
    assert result.trim_overlaps == 1
    disjoint = segment_by_transcript(buf, [row(start=500, end=600)], trim)
    assert disjoint.trim_overlaps == 0


def test_render_trimmed_excises():
    buf = AudioBuffer(samples=np.arange(16000) / 16000.0, sample_rate_hz=16000)
    out = render_trimmed(buf, [TimeInterval(0, 100), TimeInterval(200, 300)])
    cut = sample_index(100, 16000) + (sample_index(300, 16000) - sample_index(200, 16000))
    assert len(out) == 16000 - cut
    # first kept sample is the one right after the first interval
    assert out.samples[0] == buf.samples[sample_index(100, 16000)]


def test_render_trimmed_handles_overlap_and_overrun():
    buf = AudioBuffer(samples=np.ones(1000), sample_rate_hz=1000)
    out = render_trimmed(buf, [TimeInterval(0, 600), TimeInterval(500, 5000)])
    assert len(out) == 0
    untouched = render_trimmed(buf, [])
    assert np.array_equal(untouched.samples, buf.samples)


def test_segment_filename():
    assert segment_filename("001-0", 4) == "001-0_4.wav"


# --- AudioPipelineConfig ---


def full_audio_dict(**overrides):
    data = {
        "dataset": "db",
        "input_path": "audio",
        "segment_output_path": "segments",
        "target_sample_rate_hz": 16000,
        "feature_method": "FFT",
        "feature_order": 2,
        "scale_mfcc": False,
        "decoder_command": "",
    }
    data.update(overrides)
    return data


def test_audio_config_round_trip(tmp_path):
    cfg = AudioPipelineConfig.from_dict(full_audio_dict())
    assert cfg.feature_method == "FFT" and cfg.feature_order == 2
    path = tmp_path / "audio_process.json"
    cfg.to_json_file(path)
    assert AudioPipelineConfig.from_json_file(path) == cfg


def test_ftt_alias_accepted():
    cfg = AudioPipelineConfig.from_dict(full_audio_dict(feature_method="ftt"))
    assert cfg.feature_method == "FFT"


def test_fft_window_must_be_power_of_two():
    with pytest.raises(ManifestSchemaError, match="power of two"):
        AudioPipelineConfig.from_dict(full_audio_dict(feature_order=3))
    AudioPipelineConfig.from_dict(full_audio_dict(feature_order=1024))


def test_mfcc_order_range():
    good = full_audio_dict(feature_method="MFCC", feature_order=13, scale_mfcc=True)
    assert AudioPipelineConfig.from_dict(good).scale_mfcc
    with pytest.raises(ManifestSchemaError, match=r"\[1, 40\]"):
        AudioPipelineConfig.from_dict(full_audio_dict(feature_method="MFCC", feature_order=0))
    with pytest.raises(ManifestSchemaError):
        AudioPipelineConfig.from_dict(full_audio_dict(feature_method="MFCC", feature_order=41))


def test_none_requires_order_zero():
    cfg = AudioPipelineConfig.from_dict(full_audio_dict(feature_method="NONE", feature_order=0))
    assert cfg.feature_order == 0
    with pytest.raises(ManifestSchemaError, match="NONE"):
        AudioPipelineConfig.from_dict(full_audio_dict(feature_method="NONE", feature_order=2))


def test_audio_config_rejects_key_drift():
    with pytest.raises(ManifestSchemaError, match="unknown audio config keys"):
        AudioPipelineConfig.from_dict(full_audio_dict(extra_knob=1))
    short = full_audio_dict()
    del short["decoder_command"]
    with pytest.raises(ManifestSchemaError, match="missing audio config keys"):
        AudioPipelineConfig.from_dict(short)


def test_audio_config_rejects_bad_rate():
    with pytest.raises(ManifestSchemaError, match="sample_rate"):
        AudioPipelineConfig.from_dict(full_audio_dict(target_sample_rate_hz=0))
    with pytest.raises(ManifestSchemaError, match="sample_rate"):
        AudioPipelineConfig.from_dict(full_audio_dict(target_sample_rate_hz="16k"))
