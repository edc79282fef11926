"""MFCC extraction: the bridge from rendered audio to the critic's 2D input.

Pipeline, applied to a mono 44.1kHz buffer:

    reflect-pad by window/2 -> frames (window 2048, hop 256) -> periodic Hann
    -> magnitude rfft -> 64-band triangular mel filterbank (0..22050 Hz, each
    filter normalized to unit weight sum) -> log with floor -> orthonormal
    DCT-II over the band axis, keep the first 32 coefficients -> per-clip
    standardization.

A 2 s bar (88,200 samples) therefore yields a 32 x 345 matrix: axis 0 is
cepstral coefficients, axis 1 is time frames.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from .audio import SAMPLE_RATE, Waveform
from .errors import ConfigError


@dataclass(frozen=True)
class MfccSettings:
    window: int = 2048
    hop: int = 256
    n_mels: int = 64
    n_coeffs: int = 32
    fmin: float = 0.0
    fmax: float = float(SAMPLE_RATE) / 2
    log_floor: float = 1e-10
    standardize: bool = True
    standardize_eps: float = 1e-8
    # float32 halves extraction time; near-silent mel bands then carry FFT
    # noise instead of the exact log floor, which the critic never notices
    dtype: str = "float64"

    def __post_init__(self):
        if self.window < 2 or self.hop < 1 or self.hop > self.window:
            raise ConfigError(f"invalid framing: window={self.window} hop={self.hop}")
        if not (0 < self.n_coeffs <= self.n_mels):
            raise ConfigError(f"need 0 < n_coeffs <= n_mels, got {self.n_coeffs}/{self.n_mels}")
        if not (0 <= self.fmin < self.fmax <= SAMPLE_RATE / 2):
            raise ConfigError(f"invalid mel range [{self.fmin}, {self.fmax}]")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"dtype must be float64 or float32, got {self.dtype!r}")

    def n_frames(self, n_samples: int) -> int:
        return 1 + n_samples // self.hop

    def as_dict(self) -> dict:
        return {
            "window": self.window,
            "hop": self.hop,
            "n_mels": self.n_mels,
            "n_coeffs": self.n_coeffs,
            "fmin": self.fmin,
            "fmax": self.fmax,
            "log_floor": self.log_floor,
            "standardize": self.standardize,
            "standardize_eps": self.standardize_eps,
            "dtype": self.dtype,
        }


@dataclass(frozen=True)
class MfccMatrix:
    """values[coefficient, frame] plus the settings that produced it."""

    values: np.ndarray
    settings: MfccSettings

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.dtype not in (np.float32, np.float64):
            values = values.astype(np.float64)
        if values.ndim != 2:
            raise ValueError(f"MFCC matrix must be 2D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("MFCC matrix contains non-finite entries")
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def _typed_tables(settings: MfccSettings, dtype_name: str):
    window, fbank = _analysis_tables(settings)
    dtype = np.dtype(dtype_name)
    return window.astype(dtype), np.ascontiguousarray(fbank.T.astype(dtype))


@lru_cache(maxsize=8)
def _analysis_tables(settings: MfccSettings):
    """Hann window and mel filterbank for a settings tuple, built once."""
    n = settings.window
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)  # periodic Hann
    n_bins = n // 2 + 1
    bin_freqs = np.arange(n_bins) * (SAMPLE_RATE / n)
    mel_points = np.linspace(hz_to_mel(settings.fmin), hz_to_mel(settings.fmax), settings.n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    fbank = np.zeros((settings.n_mels, n_bins))
    for m in range(settings.n_mels):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        up = (bin_freqs - left) / (center - left)
        down = (right - bin_freqs) / (right - center)
        fbank[m] = np.maximum(0.0, np.minimum(up, down))
        total = fbank[m].sum()
        if total <= 0:
            raise ConfigError(f"mel band {m} has no FFT bin support; increase window or n_mels range")
        fbank[m] /= total
    return window, fbank


def compute_mfcc(w: Waveform, settings: MfccSettings = MfccSettings()) -> MfccMatrix:
    """Deterministic MFCC features of a mono 44.1kHz waveform."""
    if w.sample_rate != SAMPLE_RATE:
        raise ConfigError(f"expected {SAMPLE_RATE}Hz input, got {w.sample_rate}")
    dtype = np.float32 if settings.dtype == "float32" else np.float64
    window, fbank_t = _typed_tables(settings, settings.dtype)
    x = w.samples.astype(dtype, copy=False)
    half = settings.window // 2
    if x.size < 2:
        # reflect padding needs at least two samples; degenerate inputs are zero-padded
        padded = np.zeros(x.size + 2 * half, dtype=dtype)
        padded[half : half + x.size] = x
    else:
        padded = np.pad(x, half, mode="reflect")
    n_frames = settings.n_frames(x.size)
    frames = np.lib.stride_tricks.sliding_window_view(padded, settings.window)[:: settings.hop]
    frames = frames[:n_frames] * window
    spectrum = np.abs(scipy.fft.rfft(frames, axis=1))
    mel = spectrum @ fbank_t
    logmel = np.log(np.maximum(mel, dtype(settings.log_floor)))
    coeffs = scipy.fft.dct(logmel, type=2, norm="ortho", axis=1)[:, : settings.n_coeffs]
    values = coeffs.T
    if settings.standardize:
        values = (values - values.mean()) / (values.std() + dtype(settings.standardize_eps))
    return MfccMatrix(np.ascontiguousarray(values), settings)
