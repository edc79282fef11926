"""One-shot sample library and sample-accurate loop rendering.

All audio is mono 44.1kHz float in [-1, 1]. A bar is 16 steps over exactly
two seconds (120 bpm), i.e. 88,200 samples with step k triggering at
floor(k * 88200 / 16). The presentation render repeats the bar four times
and leaves one second for tails: 9 s, 396,900 samples.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, LibraryError, RenderError, WavFormatError
from .patterns import DrumLoop

SAMPLE_RATE = 44100
BAR_SAMPLES = 2 * SAMPLE_RATE          # 88,200
PRESENTATION_REPEATS = 4
PRESENTATION_SAMPLES = 9 * SAMPLE_RATE  # 4 bars + 1 s tail = 396,900

_STEP_ONSETS = (np.arange(16, dtype=np.int64) * BAR_SAMPLES) // 16


@dataclass(frozen=True)
class Waveform:
    """Immutable mono audio buffer at 44.1kHz."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"sample_rate must be {SAMPLE_RATE}, got {self.sample_rate}")
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if self.samples.size else 0.0


class SampleLibrary:
    """Immutable map from sample identifier (file stem) to one-shot Waveform."""

    def __init__(self, entries: dict, directory=None):
        if not entries:
            raise ConfigError("sample library must contain at least one sample")
        self._entries = dict(entries)
        self.directory = Path(directory) if directory is not None else None
        self.ids = tuple(sorted(self._entries))

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._entries

    def get(self, sample_id: str) -> Waveform:
        try:
            return self._entries[sample_id]
        except KeyError:
            raise LibraryError(f"sample id {sample_id!r} not found in library") from None


def load_library(directory) -> SampleLibrary:
    """Load every *.wav under a flat directory; identifier = file stem.

    Non-conforming audio is converted rather than rejected: stereo is
    averaged to mono and foreign sample rates are linearly resampled.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"sample directory does not exist: {directory}")
    entries = {}
    for path in sorted(directory.glob("*.wav")):
        try:
            entries[path.stem] = decode_wav(path.read_bytes())
        except (WavFormatError, OSError) as exc:
            raise LibraryError(f"cannot load sample {path.name}: {exc}") from exc
    if not entries:
        raise ConfigError(f"no .wav files found in {directory}")
    return SampleLibrary(entries, directory)


def _mix_events(events, total_samples: int, library: SampleLibrary) -> Waveform:
    """Overlap-add one-shot events (sample_id, onset) into a fixed-length
    buffer, truncating at the buffer end, then peak-normalize above 1."""
    out = np.zeros(total_samples, dtype=np.float64)
    for sample_id, onset in events:
        shot = library.get(sample_id).samples
        n = min(shot.size, total_samples - onset)
        if n > 0:
            out[onset : onset + n] += shot[:n]
    peak = np.max(np.abs(out)) if out.size else 0.0
    if peak > 1.0:
        out /= peak
    return Waveform(out)


def _loop_events(loop: DrumLoop, library: SampleLibrary):
    if not loop.pattern.is_standard():
        raise RenderError(f"renderer requires a 4x16 pattern, got {loop.pattern.grid.shape}")
    for sample_id in loop.instruments.samples:
        if sample_id not in library:
            raise RenderError(f"sample id {sample_id!r} does not resolve in the library")
    events = []
    for track, sample_id in enumerate(loop.instruments.samples):
        for step in np.flatnonzero(loop.pattern.grid[track]):
            events.append((sample_id, int(_STEP_ONSETS[step])))
    return events


def render_bar(loop: DrumLoop, library: SampleLibrary) -> Waveform:
    """Render one 2 s bar; hit tails truncate at the bar boundary."""
    return _mix_events(_loop_events(loop, library), BAR_SAMPLES, library)


def render_presentation(loop: DrumLoop, library: SampleLibrary) -> Waveform:
    """Render the 9 s playback form: four bar repeats plus a 1 s tail, with
    hits allowed to ring across repeat boundaries."""
    events = _loop_events(loop, library)
    repeated = [
        (sample_id, onset + rep * BAR_SAMPLES)
        for rep in range(PRESENTATION_REPEATS)
        for sample_id, onset in events
    ]
    return _mix_events(repeated, PRESENTATION_SAMPLES, library)


# --- WAV encoding: RIFF/WAVE, PCM, little-endian ---

def encode_wav(w: Waveform) -> bytes:
    """Encode as canonical mono 16-bit PCM 44.1kHz: a -> round(a*32767),
    clamped to [-32768, 32767]."""
    pcm = np.clip(np.round(w.samples * 32767.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(data),
        b"WAVE",
        b"fmt ",
        16,
        1,                      # PCM
        1,                      # mono
        SAMPLE_RATE,
        SAMPLE_RATE * 2,        # byte rate
        2,                      # block align
        16,                     # bits per sample
        b"data",
        len(data),
    )
    return header + data


def _pcm_to_float(raw: bytes, fmt_tag: int, bits: int, n_channels: int) -> np.ndarray:
    if fmt_tag == 1:
        if bits == 16:
            x = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
        elif bits == 8:
            x = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
        elif bits == 24:
            b = np.frombuffer(raw, dtype=np.uint8)
            b = b[: (b.size // 3) * 3].reshape(-1, 3)
            v = (
                b[:, 0].astype(np.int64)
                | (b[:, 1].astype(np.int64) << 8)
                | (b[:, 2].astype(np.int64) << 16)
            )
            v = np.where(v >= 1 << 23, v - (1 << 24), v)
            x = v.astype(np.float64) / float(1 << 23)
        elif bits == 32:
            x = np.frombuffer(raw, dtype="<i4").astype(np.float64) / float(1 << 31)
        else:
            raise WavFormatError(f"unsupported PCM bit depth: {bits}")
    elif fmt_tag == 3:
        if bits == 32:
            x = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        elif bits == 64:
            x = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        else:
            raise WavFormatError(f"unsupported float bit depth: {bits}")
    else:
        raise WavFormatError(f"unsupported WAV format tag: {fmt_tag}")
    frames = x.size // n_channels
    return x[: frames * n_channels].reshape(frames, n_channels)


def decode_wav(data: bytes) -> Waveform:
    """Decode RIFF/WAVE PCM bytes into a mono 44.1kHz Waveform.

    Multi-channel input is averaged to mono; foreign sample rates are
    linearly resampled. Malformed headers raise WavFormatError.
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError("not a RIFF/WAVE stream")
    fmt = None
    raw = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise WavFormatError("fmt chunk truncated")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if len(body) < chunk_size:
                raise WavFormatError("data chunk truncated")
            raw = body
        pos += 8 + chunk_size + (chunk_size & 1)
    if fmt is None:
        raise WavFormatError("missing fmt chunk")
    if raw is None:
        raise WavFormatError("missing data chunk")
    fmt_tag, n_channels, rate, _byte_rate, _block_align, bits = fmt
    if n_channels < 1:
        raise WavFormatError("channel count must be >= 1")
    if rate < 1:
        raise WavFormatError("invalid sample rate")
    frames = _pcm_to_float(raw, fmt_tag, bits, n_channels)
    mono = frames.mean(axis=1) if n_channels > 1 else frames[:, 0]
    if rate != SAMPLE_RATE:
        mono = _resample_linear(mono, rate, SAMPLE_RATE)
    peak = np.max(np.abs(mono)) if mono.size else 0.0
    if peak > 1.0:
        mono = mono / peak
    return Waveform(mono)


def _resample_linear(x: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    if x.size == 0:
        return x
    n_out = int(round(x.size * dst_rate / src_rate))
    positions = np.arange(n_out) * (src_rate / dst_rate)
    return np.interp(positions, np.arange(x.size), x)
