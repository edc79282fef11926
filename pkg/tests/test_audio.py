import struct

import numpy as np
import pytest

from drumcritic.audio import (
    BAR_SAMPLES,
    PRESENTATION_SAMPLES,
    SampleLibrary,
    Waveform,
    decode_wav,
    encode_wav,
    load_library,
    render_bar,
    render_presentation,
)
from drumcritic.errors import ConfigError, LibraryError, RenderError, WavFormatError
from drumcritic.patterns import DrumLoop, DrumPattern, InstrumentAssignment

from .reference_dsp import reference_resample_linear


def make_loop(hits, samples=("impulse",) * 4, loop_id="t"):
    grid = np.zeros((4, 16), dtype=bool)
    for track, step in hits:
        grid[track, step] = True
    return DrumLoop(DrumPattern(grid), InstrumentAssignment(samples), loop_id)


def write_pcm16(path, samples, sample_rate=44100, channels=1):
    pcm = np.asarray(samples, dtype="<i2")
    data = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(data), b"WAVE", b"fmt ", 16, 1, channels,
        sample_rate, sample_rate * channels * 2, channels * 2, 16, b"data", len(data),
    )
    path.write_bytes(header + data)


# --- library loading ---

def test_load_identity(tmp_path):
    write_pcm16(tmp_path / "one.wav", np.arange(100, dtype=np.int16))
    lib = load_library(tmp_path)
    assert len(lib) == 1 and "one" in lib
    assert len(lib.get("one")) == 100


def test_pcm_mapping(tmp_path):
    write_pcm16(tmp_path / "m.wav", np.array([-32768, 16384], dtype=np.int16))
    w = load_library(tmp_path).get("m")
    assert w.samples[0] == -1.0
    assert w.samples[1] == 0.5


def test_stereo_averaged(tmp_path):
    # L=1000, R=3000 interleaved -> mono 2000
    write_pcm16(tmp_path / "s.wav", np.array([1000, 3000] * 10, dtype=np.int16), channels=2)
    w = load_library(tmp_path).get("s")
    assert len(w) == 10
    assert np.allclose(w.samples, 2000 / 32768.0)


def test_resample_length_and_oracle(tmp_path, rng):
    n = 700
    x = (rng.standard_normal(n) * 8000).astype(np.int16)
    write_pcm16(tmp_path / "r.wav", x, sample_rate=22050)
    w = load_library(tmp_path).get("r")
    assert abs(len(w) - 2 * n) <= 1
    expected = reference_resample_linear(x.astype(np.float64) / 32768.0, 22050, 44100)
    assert np.max(np.abs(w.samples - expected)) < 1e-12


def test_empty_directory(tmp_path):
    with pytest.raises(ConfigError):
        load_library(tmp_path)
    with pytest.raises(ConfigError):
        load_library(tmp_path / "missing")


def test_corrupt_file_names_the_file(tmp_path):
    (tmp_path / "bad.wav").write_bytes(b"not a wav at all")
    with pytest.raises(LibraryError, match="bad.wav"):
        load_library(tmp_path)


# --- rendering ---

def test_render_bar_single_impulse(tiny_library):
    out = render_bar(make_loop([(0, 0)]), tiny_library)
    assert len(out) == BAR_SAMPLES
    assert out.samples[0] == 1.0
    assert np.count_nonzero(out.samples) == 1


def test_render_bar_onsets(tiny_library):
    out = render_bar(make_loop([(0, 0), (0, 1), (0, 2), (0, 3)]), tiny_library)
    assert np.flatnonzero(out.samples).tolist() == [0, 5512, 11025, 16537]


def test_render_bar_sums_and_normalizes(tiny_library):
    out = render_bar(make_loop([(0, 5), (1, 5)]), tiny_library)
    assert out.peak == 1.0
    onset = (5 * BAR_SAMPLES) // 16
    assert out.samples[onset] == 1.0


def test_render_bar_truncates_tail(tiny_library):
    # decay sample is 2000 long; a hit on the last step must stop at the bar edge
    out = render_bar(make_loop([(0, 15)], samples=("decay",) * 4), tiny_library)
    assert len(out) == BAR_SAMPLES
    onset = (15 * BAR_SAMPLES) // 16
    assert out.samples[onset] != 0.0


def test_render_bar_linearity(tiny_library):
    a = make_loop([(0, 0), (0, 4)], samples=("decay",) * 4)
    b = make_loop([(1, 2), (1, 9)], samples=("tone",) * 4)
    both = make_loop(
        [(0, 0), (0, 4), (1, 2), (1, 9)], samples=("decay", "tone", "decay", "tone")
    )
    ra = render_bar(a, tiny_library).samples
    rb = render_bar(b, tiny_library).samples
    rab = render_bar(both, tiny_library).samples
    assert np.max(np.abs(ra)) + np.max(np.abs(rb)) <= 1.0  # no normalization in play
    assert np.allclose(rab, ra + rb, atol=1e-12)


def test_render_presentation_length_and_repeats(tiny_library):
    out = render_presentation(make_loop([(0, 0)]), tiny_library)
    assert len(out) == PRESENTATION_SAMPLES
    assert np.flatnonzero(out.samples).tolist() == [0, 88200, 176400, 264600]


def test_render_presentation_empty(tiny_library):
    out = render_presentation(make_loop([]), tiny_library)
    assert len(out) == PRESENTATION_SAMPLES
    assert not np.any(out.samples)


def test_render_presentation_tails_ring_across_bars(tiny_library):
    # an 8000-sample hit at step 15 starts 5513 samples before the bar edge:
    # the bar render truncates it, the presentation render lets it ring
    loop = make_loop([(0, 15)], samples=("ring",) * 4)
    onset = (15 * BAR_SAMPLES) // 16
    bar = render_bar(loop, tiny_library)
    assert not np.any(bar.samples[:onset]) and bar.samples[onset] != 0.0
    out = render_presentation(loop, tiny_library)
    assert out.samples[BAR_SAMPLES + 5] != 0.0                 # tail from bar 0 rings into bar 1
    assert out.samples[onset + 3 * BAR_SAMPLES + 7999] != 0.0  # final tail fades in the 9th second


def test_render_unresolved_sample(tiny_library):
    with pytest.raises(RenderError, match="ghost"):
        render_bar(make_loop([(0, 0)], samples=("ghost",) * 4), tiny_library)


def test_no_sample_exceeds_unit(library, rng):
    from drumcritic.patterns import random_loop

    for _ in range(10):
        loop = random_loop(library, rng)
        assert render_bar(loop, library).peak <= 1.0
        assert render_presentation(loop, library).peak <= 1.0


# --- WAV encoding ---

def test_encode_full_scale():
    data = encode_wav(Waveform(np.array([1.0])))
    assert data[-2:] == b"\xff\x7f"


def test_encode_golden_bytes():
    # hand-built from the RIFF spec: 44-byte header + 4 samples
    golden = b"".join(
        [
            b"RIFF", struct.pack("<I", 44), b"WAVE",
            b"fmt ", struct.pack("<I", 16),
            struct.pack("<H", 1),       # PCM
            struct.pack("<H", 1),       # mono
            struct.pack("<I", 44100),
            struct.pack("<I", 88200),   # byte rate
            struct.pack("<H", 2),       # block align
            struct.pack("<H", 16),      # bits
            b"data", struct.pack("<I", 8),
            struct.pack("<4h", 0, 16384, -16384, -32767),
        ]
    )
    assert encode_wav(Waveform(np.array([0.0, 0.5, -0.5, -1.0]))) == golden


def test_roundtrip_error_bound(rng):
    # spec bound (1/32767) holds for half-scale signals ...
    w = Waveform(rng.uniform(-0.5, 0.5, size=20_000))
    back = decode_wav(encode_wav(w))
    assert np.max(np.abs(back.samples - w.samples)) <= 1 / 32767
    # ... and the exact worst case for the full range is 1.5/32768
    w = Waveform(rng.uniform(-1.0, 1.0, size=20_000))
    back = decode_wav(encode_wav(w))
    assert np.max(np.abs(back.samples - w.samples)) <= 1.5 / 32768


def test_decode_rejects_malformed():
    with pytest.raises(WavFormatError):
        decode_wav(b"RIFFxxxxNOPE")
    with pytest.raises(WavFormatError):
        decode_wav(b"short")
    good = encode_wav(Waveform(np.zeros(10)))
    with pytest.raises(WavFormatError):
        decode_wav(good[:30])  # truncated data chunk


def test_decode_skips_foreign_chunks():
    wav = encode_wav(Waveform(np.array([0.25, -0.25])))
    # splice a LIST chunk between fmt and data
    header, data_chunk = wav[:36], wav[36:]
    extra = b"LIST" + struct.pack("<I", 4) + b"INFO"
    patched = bytearray(header + extra + data_chunk)
    patched[4:8] = struct.pack("<I", len(patched) - 8)
    out = decode_wav(bytes(patched))
    assert len(out) == 2


def test_waveform_invariants():
    with pytest.raises(ValueError):
        Waveform(np.array([np.nan]))
    with pytest.raises(ValueError):
        Waveform(np.zeros(4), sample_rate=48000)
