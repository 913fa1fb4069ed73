"""Short-time Fourier analysis / overlap-add synthesis."""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window

__all__ = [
    "ConfigurationError",
    "FrameGeometry",
    "Spectrogram",
    "analyze",
    "synthesize",
    "window_phase_response",
    "interior_slice",
]


class ConfigurationError(ValueError):
    """Invalid framing or estimator configuration."""


@dataclass(frozen=True)
class FrameGeometry:
    """Framing parameters.  Defaults: 32 ms periodic Hann, 50% overlap, 16 kHz."""

    sample_rate: int = 16000
    window_len: int = 512
    hop: int = 256
    fft_len: int = 512
    window_kind: str = "hann"

    @classmethod
    def from_duration(cls, sample_rate=16000, window_ms=32.0, overlap=0.5, window_kind="hann"):
        n = int(round(sample_rate * window_ms / 1000.0))
        hop = int(round(n * (1.0 - overlap)))
        return cls(sample_rate, n, hop, n, window_kind)

    @property
    def n_bins(self):
        return self.fft_len // 2 + 1

    def window(self):
        # periodic (DFT-even) window: sums to a constant at hop = N/2
        return get_window(self.window_kind, self.window_len, fftbins=True)

    def bin_frequencies(self):
        return np.arange(self.n_bins) * self.sample_rate / self.fft_len

    def n_frames(self, length):
        return (length - self.window_len) // self.hop + 1

    def validate(self):
        if self.window_len <= 0 or self.hop <= 0 or self.sample_rate <= 0:
            raise ConfigurationError("sample_rate, window_len and hop must be positive")
        if self.fft_len < self.window_len:
            raise ConfigurationError("fft_len must be >= window_len")
        if self.hop > self.window_len:
            raise ConfigurationError("hop larger than window leaves gaps in the signal")
        self.check_cola()

    def cola_deviation(self):
        """Relative peak-to-peak ripple of the overlapped window sum."""
        w = self.window()
        period = np.zeros(self.hop)
        for start in range(0, self.window_len, self.hop):
            seg = w[start:start + self.hop]
            period[: seg.size] += seg
        return float(np.ptp(period) / np.mean(period))

    def check_cola(self, tol=1e-12):
        dev = self.cola_deviation()
        if dev > tol:
            raise ConfigurationError(
                f"{self.window_kind} window of {self.window_len} samples at hop {self.hop} "
                f"is not constant-overlap-add (ripple {dev:.3g})"
            )


@dataclass
class Spectrogram:
    """One-sided STFT, ``coeffs[p, k]`` for frame p and bin k."""

    coeffs: np.ndarray
    geometry: FrameGeometry = field(default_factory=FrameGeometry)
    length: int = 0

    @property
    def n_frames(self):
        return self.coeffs.shape[0]

    @property
    def magnitude(self):
        return np.abs(self.coeffs)

    @property
    def phase(self):
        return np.angle(self.coeffs)

    def with_coeffs(self, coeffs):
        return Spectrogram(np.asarray(coeffs, dtype=complex), self.geometry, self.length)


def analyze(signal, geom=None):
    """Windowed one-sided STFT; frame p starts at sample ``p * hop``."""
    geom = geom or FrameGeometry()
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise ValueError("analyze expects a 1-D signal")
    if x.size < geom.window_len:
        raise ValueError(f"signal has {x.size} samples, need at least {geom.window_len}")
    n_frames = geom.n_frames(x.size)
    idx = np.arange(n_frames)[:, None] * geom.hop + np.arange(geom.window_len)[None, :]
    frames = x[idx] * geom.window()
    coeffs = np.fft.rfft(frames, n=geom.fft_len, axis=1)
    return Spectrogram(coeffs, geom, x.size)


def synthesize(spec, length=None):
    """Inverse STFT with overlap-add, normalized by the summed analysis window.

    Samples where the summed window vanishes (the very first sample, the
    uncovered tail) come out as zero.
    """
    geom = spec.geometry
    geom.check_cola()
    length = length if length is not None else spec.length
    if not length:
        length = (spec.n_frames - 1) * geom.hop + geom.window_len
    frames = np.fft.irfft(spec.coeffs, n=geom.fft_len, axis=1)[:, : geom.window_len]
    w = geom.window()
    total = (spec.n_frames - 1) * geom.hop + geom.window_len
    out = np.zeros(max(total, length))
    wsum = np.zeros_like(out)
    for p in range(spec.n_frames):
        start = p * geom.hop
        out[start:start + geom.window_len] += frames[p]
        wsum[start:start + geom.window_len] += w
    nz = wsum > 1e-8 * w.max()
    out[nz] /= wsum[nz]
    out[~nz] = 0.0
    return out[:length]


def interior_slice(geom, length):
    """Samples covered by full overlap on both sides (edge frames excluded)."""
    n_frames = geom.n_frames(length)
    return slice(geom.window_len, (n_frames - 1) * geom.hop)


def window_phase_response(geom, fractional_bin_offset):
    """Phase of the analysis window's DTFT at an offset measured in bins.

    Time reference is the frame start (``n = 0 .. N-1``), so for a window
    symmetric about N/2 the phase is linear, ``-pi * offset * N / fft_len``,
    with jumps of pi where the amplitude changes sign outside the main lobe.
    """
    offset = np.asarray(fractional_bin_offset, dtype=float)
    w = geom.window()
    omega = 2.0 * np.pi * offset / geom.fft_len
    n = np.arange(geom.window_len)
    dtft = np.exp(-1j * np.multiply.outer(omega, n)) @ w
    out = np.angle(dtft)
    return float(out) if out.ndim == 0 else out
