"""Frame-level FFT magnitude and MFCC features for audio segments.

Both extractors share the frame-count law
``floor((N - window) / hop) + 1`` for N >= window, else 0 rows.

FFT features: Hann-windowed frames of a caller-chosen power-of-two
window (hop = window/2), one-sided magnitude spectrum of dimension
window/2 + 1.

MFCC: pre-emphasis 0.97, 25 ms window / 10 ms hop (sample counts by
round(seconds * rate)), Hann, power spectrum at the window length, 26
triangular mel filters (mel(f) = 2595*log10(1 + f/700)) spanning 0 to
Nyquist on integer FFT bins, natural log floored at 1e-10, orthonormal
DCT-II, coefficients 0..k-1.  The hyperparameters are fixed constants;
only the coefficient count and the optional per-coefficient z-score
(population std, floored at 1e-12) are caller choices.

Feature files are text: one JSON meta header line, then one line per
frame of tab-separated floats in shortest round-trip rendering, so
equal matrices give equal bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioBuffer
from .errors import ManifestSchemaError, NumCoeffsOutOfRange, WindowNotPowerOfTwo
from .fileio import atomic_write_text

_PRE_EMPHASIS = 0.97
_MEL_FILTERS = 26
_LOG_FLOOR = 1e-10
_STD_FLOOR = 1e-12
_FRAME_S = 0.025
_HOP_S = 0.010


@dataclass(eq=False)
class FeatureMatrix:
    """(frames, dim) float matrix plus the parameters that shaped it."""

    values: np.ndarray
    meta: dict

    @property
    def frame_count(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1] if self.values.ndim == 2 else 0


def frame_count(num_samples: int, window: int, hop: int) -> int:
    if num_samples < window:
        return 0
    return (num_samples - window) // hop + 1


def _frames(signal: np.ndarray, window: int, hop: int) -> np.ndarray:
    count = frame_count(signal.size, window, hop)
    if count == 0:
        return np.zeros((0, window))
    return np.lib.stride_tricks.sliding_window_view(signal, window)[::hop][:count]


def fft_features(buf: AudioBuffer, window_size: int) -> FeatureMatrix:
    """Per-frame one-sided magnitude spectra (Hann window, half-overlap)."""
    if (
        not isinstance(window_size, int)
        or window_size < 2
        or window_size & (window_size - 1)
    ):
        raise WindowNotPowerOfTwo(f"window size must be a power of two >= 2, got {window_size}")
    hop = window_size // 2
    frames = _frames(buf.samples, window_size, hop)
    spectra = np.abs(np.fft.rfft(frames * np.hanning(window_size), axis=1))
    meta = {
        "method": "FFT",
        "window_size": window_size,
        "hop_size": hop,
        "sample_rate_hz": buf.sample_rate_hz,
        "scaled": False,
    }
    return FeatureMatrix(values=spectra, meta=meta)


def _mel(hz: float) -> float:
    return 2595.0 * math.log10(1.0 + hz / 700.0)


def _hz(mel: float) -> float:
    return 700.0 * (10.0 ** (mel / 2595.0) - 1.0)


def _dct2_basis(num_coeffs: int, n: int) -> np.ndarray:
    """Orthonormal type-II DCT rows, defined for any coefficient index.

    Rows 0..n-1 equal scipy's dct(type=2, norm="ortho"); asking for more
    coefficients than filters keeps evaluating the same cosine kernel at
    higher index instead of silently returning fewer columns.
    """
    k = np.arange(num_coeffs)[:, None]
    i = np.arange(n)[None, :]
    basis = np.sqrt(2.0 / n) * np.cos(np.pi * k * (2 * i + 1) / (2 * n))
    basis[0, :] = np.sqrt(1.0 / n)
    return basis


def _mel_filterbank(num_filters: int, nfft: int, rate_hz: int) -> np.ndarray:
    points = np.linspace(0.0, _mel(rate_hz / 2.0), num_filters + 2)
    bins = np.floor((nfft + 1) * np.array([_hz(m) for m in points]) / rate_hz).astype(int)
    bank = np.zeros((num_filters, nfft // 2 + 1))
    for j in range(num_filters):
        left, center, right = bins[j], bins[j + 1], bins[j + 2]
        for i in range(left, center):
            bank[j, i] = (i - left) / (center - left)
        for i in range(center, right):
            bank[j, i] = (right - i) / (right - center)
    return bank


def mfcc(buf: AudioBuffer, num_coeffs: int, scale: bool = False) -> FeatureMatrix:
    """Mel-frequency cepstral coefficients 0..num_coeffs-1 per frame."""
    if not isinstance(num_coeffs, int) or not 1 <= num_coeffs <= 40:
        raise NumCoeffsOutOfRange(f"coefficient count must be in [1, 40], got {num_coeffs}")
    rate = buf.sample_rate_hz
    window = round(_FRAME_S * rate)
    hop = round(_HOP_S * rate)
    meta = {
        "method": "MFCC",
        "window_size": window,
        "hop_size": hop,
        "sample_rate_hz": rate,
        "scaled": bool(scale),
    }

    signal = buf.samples
    if signal.size:
        emphasized = np.concatenate(([signal[0]], signal[1:] - _PRE_EMPHASIS * signal[:-1]))
    else:
        emphasized = signal
    frames = _frames(emphasized, window, hop)
    if frames.shape[0] == 0:
        return FeatureMatrix(values=np.zeros((0, num_coeffs)), meta=meta)

    power = np.abs(np.fft.rfft(frames * np.hanning(window), axis=1)) ** 2
    energies = power @ _mel_filterbank(_MEL_FILTERS, window, rate).T
    log_energies = np.log(np.maximum(energies, _LOG_FLOOR))
    coeffs = log_energies @ _dct2_basis(num_coeffs, _MEL_FILTERS).T
    if scale:
        mean = coeffs.mean(axis=0)
        std = np.maximum(coeffs.std(axis=0), _STD_FLOOR)
        coeffs = (coeffs - mean) / std
    return FeatureMatrix(values=coeffs, meta=meta)


# --- serialization ---


def feature_filename(uid: str, utt_index: int) -> str:
    return f"{uid}_{utt_index}.feat.tsv"


def write_feature_file(path: str | Path, matrix: FeatureMatrix) -> Path:
    header = json.dumps(matrix.meta, sort_keys=True, separators=(",", ":"))
    lines = [header]
    for row in matrix.values:
        lines.append("\t".join(repr(float(v)) for v in row))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_feature_file(path: str | Path) -> FeatureMatrix:
    """Read back a feature file; a frameless file yields a (0, 0) matrix."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline()
        try:
            meta = json.loads(header)
        except ValueError as exc:
            raise ManifestSchemaError(f"{path}: bad feature header: {exc}") from exc
        if not isinstance(meta, dict):
            raise ManifestSchemaError(f"{path}: feature header is not an object")
        rows = [
            [float(cell) for cell in line.rstrip("\n").split("\t")]
            for line in fh
            if line.strip()
        ]
    values = np.array(rows, dtype=np.float64) if rows else np.zeros((0, 0))
    return FeatureMatrix(values=values, meta=meta)
