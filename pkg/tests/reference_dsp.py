"""Slow, definition-level DSP reference used as the oracle for the fast
feature pipeline. Everything here is written directly from the transform
definitions (explicit DFT sums, loop-built filterbank, cosine-sum DCT) and
shares no code with the production path.
"""

import numpy as np

SAMPLE_RATE = 44100


def reference_mfcc(x, window=2048, hop=256, n_mels=64, n_coeffs=32,
                   fmin=0.0, fmax=SAMPLE_RATE / 2, log_floor=1e-10):
    """MFCC matrix (n_coeffs x n_frames), pre-standardization."""
    x = np.asarray(x, dtype=np.float64)
    half = window // 2
    padded = np.concatenate([x[1 : half + 1][::-1], x, x[-half - 1 : -1][::-1]])
    n_frames = 1 + x.size // hop
    hann = np.array([0.5 - 0.5 * np.cos(2.0 * np.pi * n / window) for n in range(window)])

    n_bins = window // 2 + 1
    dft = np.exp(-2j * np.pi * np.outer(np.arange(n_bins), np.arange(window)) / window)

    fbank = _reference_filterbank(window, n_mels, fmin, fmax)

    out = np.zeros((n_coeffs, n_frames))
    for t in range(n_frames):
        frame = padded[t * hop : t * hop + window] * hann
        magnitude = np.abs(dft @ frame)
        mel = fbank @ magnitude
        logmel = np.log(np.maximum(mel, log_floor))
        out[:, t] = _reference_dct2_ortho(logmel)[:n_coeffs]
    return out


def _reference_filterbank(window, n_mels, fmin, fmax):
    """Triangular mel filters on rfft bin frequencies, unit weight sum each."""
    n_bins = window // 2 + 1
    bin_freqs = [k * SAMPLE_RATE / window for k in range(n_bins)]

    def mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def invmel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    lo, hi = mel(fmin), mel(fmax)
    points = [invmel(lo + (hi - lo) * i / (n_mels + 1)) for i in range(n_mels + 2)]
    fbank = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        left, center, right = points[m], points[m + 1], points[m + 2]
        for k, f in enumerate(bin_freqs):
            if left < f < center:
                fbank[m, k] = (f - left) / (center - left)
            elif center <= f < right:
                fbank[m, k] = (right - f) / (right - center)
            elif f == left == center:  # not reachable for sane settings
                fbank[m, k] = 1.0
        total = fbank[m].sum()
        if total > 0:
            fbank[m] /= total
    return fbank


def _reference_dct2_ortho(v):
    n = v.size
    out = np.zeros(n)
    for k in range(n):
        acc = 0.0
        for i in range(n):
            acc += v[i] * np.cos(np.pi * k * (2 * i + 1) / (2 * n))
        scale = np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n)
        out[k] = scale * acc
    return out


def reference_resample_linear(x, src_rate, dst_rate):
    """Independent linear-interpolation resampler (loop form)."""
    x = np.asarray(x, dtype=np.float64)
    n_out = int(round(x.size * dst_rate / src_rate))
    out = np.zeros(n_out)
    for i in range(n_out):
        pos = i * src_rate / dst_rate
        lo = int(np.floor(pos))
        if lo >= x.size - 1:
            out[i] = x[-1]
        else:
            frac = pos - lo
            out[i] = x[lo] * (1 - frac) + x[lo + 1] * frac
    return out
