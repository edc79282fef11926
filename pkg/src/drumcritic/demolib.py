"""Synthesized one-shot sample library for demos, simulations, and tests.

Generates a varied set of drum-like hits (kicks, snares, hats, claps, toms,
plus a few deliberately harsh squeals) as 44.1kHz mono 16-bit WAV files, so
the whole system can run without external audio assets.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio import SAMPLE_RATE, Waveform, encode_wav


def _t(duration: float) -> np.ndarray:
    return np.arange(int(duration * SAMPLE_RATE)) / SAMPLE_RATE


def _norm(x: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(x))
    return x / peak * 0.9 if peak > 0 else x


def _kick(rng, variant: int) -> np.ndarray:
    t = _t(0.25 + 0.05 * variant)
    f_hi, f_lo = 110.0 + 15 * variant, 38.0 + 4 * variant
    freq = f_lo + (f_hi - f_lo) * np.exp(-t * 28)
    phase = 2 * np.pi * np.cumsum(freq) / SAMPLE_RATE
    return _norm(np.sin(phase) * np.exp(-t * (16 + 2 * variant)))


def _snare(rng, variant: int) -> np.ndarray:
    t = _t(0.16 + 0.02 * variant)
    tone = np.sin(2 * np.pi * (165 + 20 * variant) * t) * np.exp(-t * 30)
    noise = rng.standard_normal(t.size) * np.exp(-t * (22 + 4 * variant))
    return _norm(0.5 * tone + 0.6 * noise)


def _hat(rng, variant: int) -> np.ndarray:
    t = _t(0.05 + 0.03 * variant)
    noise = rng.standard_normal(t.size + 1)
    bright = np.diff(noise)  # crude highpass
    return _norm(bright * np.exp(-t * (55 - 8 * variant)))


def _clap(rng, variant: int) -> np.ndarray:
    t = _t(0.18)
    out = np.zeros(t.size)
    for k in range(3):
        delay = int(0.011 * k * SAMPLE_RATE)
        env = np.exp(-np.maximum(t - 0.011 * k, 0) * 40) * (t >= 0.011 * k)
        out += rng.standard_normal(t.size) * env * (0.8 ** k)
    return _norm(out * np.exp(-t * (6 + variant)))


def _tom(rng, variant: int) -> np.ndarray:
    t = _t(0.22)
    f = 90.0 + 35.0 * variant
    freq = f * (1 + 0.4 * np.exp(-t * 35))
    phase = 2 * np.pi * np.cumsum(freq) / SAMPLE_RATE
    return _norm(np.sin(phase) * np.exp(-t * 18))


def _squeal(rng, variant: int) -> np.ndarray:
    # intentionally unpleasant: loud slow-decaying high-frequency tone
    t = _t(0.4)
    f = 4800.0 + 1300.0 * variant
    wob = 1 + 0.02 * np.sin(2 * np.pi * 9 * t)
    return _norm(np.sin(2 * np.pi * f * wob * t) * np.exp(-t * 5))


_FAMILIES = [
    ("kick", _kick, 4),
    ("snare", _snare, 4),
    ("hat", _hat, 4),
    ("clap", _clap, 2),
    ("tom", _tom, 3),
    ("squeal", _squeal, 3),
]


def make_demo_library(directory, seed: int = 2024) -> list:
    """Write the demo one-shots into a directory; returns the sample ids."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    ids = []
    for family, synth, count in _FAMILIES:
        for variant in range(count):
            name = f"{family}{variant + 1:02d}"
            wav = encode_wav(Waveform(synth(rng, variant)))
            (directory / f"{name}.wav").write_bytes(wav)
            ids.append(name)
    return ids
