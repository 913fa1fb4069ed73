"""Objective measures and stimulus construction: STOI, segmental SNR, mixing, SSN."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_toeplitz
from scipy.signal import butter, lfilter, resample_poly

__all__ = [
    "MetricError",
    "stoi",
    "segmental_snr",
    "MixSpec",
    "mix_at_snr",
    "mix_components",
    "active_level",
    "gen_ssn",
    "lpc",
    "synthetic_speech",
]


class MetricError(ValueError):
    """Inputs for which a metric or stimulus is undefined."""


# -- STOI ---------------------------------------------------------------------

STOI_FS = 10000
_STOI_FRAME = 256
_STOI_NFFT = 512
_STOI_BANDS = 15
_STOI_MIN_FREQ = 150.0
_STOI_SEGMENT = 30  # frames, 384 ms at 10 kHz
_STOI_CLIP_DB = -15.0
_STOI_DYN_RANGE = 40.0
_EPS = np.finfo(float).eps


def _third_octave_matrix(fs, nfft, n_bands, min_freq):
    f = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(n_bands, dtype=float)
    centre = 2.0 ** (k / 3.0) * min_freq
    lo = min_freq * 2.0 ** ((2 * k - 1) / 6.0)
    hi = min_freq * 2.0 ** ((2 * k + 1) / 6.0)
    obm = np.zeros((n_bands, f.size))
    for i in range(n_bands):
        a = int(np.argmin((f - lo[i]) ** 2))
        b = int(np.argmin((f - hi[i]) ** 2))
        obm[i, a:b] = 1.0
    return obm, centre


def _stoi_window(n):
    # Hann without its zero end points
    return np.hanning(n + 2)[1:-1]


def _frames(x, n, hop):
    count = (x.size - n) // hop + 1
    idx = np.arange(count)[:, None] * hop + np.arange(n)[None, :]
    return x[idx]


def _remove_silent_frames(x, y, dyn_range, n, hop):
    """Drop frames more than ``dyn_range`` dB below the loudest clean frame."""
    w = _stoi_window(n)
    xf = _frames(x, n, hop) * w
    yf = _frames(y, n, hop) * w
    energy = 20.0 * np.log10(np.linalg.norm(xf, axis=1) / np.sqrt(n) + _EPS)
    keep = energy > energy.max() - dyn_range
    xf, yf = xf[keep], yf[keep]
    # overlap-add the surviving frames back into a signal
    length = (xf.shape[0] - 1) * hop + n
    xs = np.zeros(length)
    ys = np.zeros(length)
    for i in range(xf.shape[0]):
        xs[i * hop:i * hop + n] += xf[i]
        ys[i * hop:i * hop + n] += yf[i]
    return xs, ys


def _band_envelopes(x, obm):
    spec = np.fft.rfft(_frames(x, _STOI_FRAME, _STOI_FRAME // 2) * _stoi_window(_STOI_FRAME), n=_STOI_NFFT, axis=1)
    return np.sqrt(obm @ (np.abs(spec) ** 2).T)


def stoi(clean, processed, fs=16000):
    """Short-time objective intelligibility of ``processed`` against ``clean``.

    Both signals are resampled to 10 kHz, silent frames (more than 40 dB
    below the loudest) are removed, and one-third-octave envelopes over
    384 ms segments are normalized, clipped at -15 dB SDR and correlated.
    Returns the mean correlation clamped to [0, 1].
    """
    x = np.asarray(clean, dtype=float)
    y = np.asarray(processed, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError(f"signals must be 1-D and equally long, got {x.shape} and {y.shape}")
    if fs != 16000:
        raise MetricError(f"stoi expects 16 kHz input, got {fs} Hz")
    if x.size < fs:
        raise MetricError("stoi needs at least 1 s of signal")
    if not np.any(x):
        raise MetricError("clean signal is all zeros")
    x = resample_poly(x, 5, 8)
    y = resample_poly(y, 5, 8)
    x, y = _remove_silent_frames(x, y, _STOI_DYN_RANGE, _STOI_FRAME, _STOI_FRAME // 2)
    obm, _ = _third_octave_matrix(STOI_FS, _STOI_NFFT, _STOI_BANDS, _STOI_MIN_FREQ)
    x_env = _band_envelopes(x, obm)
    y_env = _band_envelopes(y, obm)
    n_frames = x_env.shape[1]
    if n_frames < _STOI_SEGMENT:
        raise MetricError(f"only {n_frames} non-silent frames; need {_STOI_SEGMENT}")

    # all segments at once: (segments, bands, frames)
    starts = np.arange(n_frames - _STOI_SEGMENT + 1)
    idx = starts[:, None] + np.arange(_STOI_SEGMENT)[None, :]
    xs = x_env[:, idx].transpose(1, 0, 2)
    ys = y_env[:, idx].transpose(1, 0, 2)
    scale = np.linalg.norm(xs, axis=2, keepdims=True) / (np.linalg.norm(ys, axis=2, keepdims=True) + _EPS)
    clip = 1.0 + 10.0 ** (-_STOI_CLIP_DB / 20.0)
    yp = np.minimum(ys * scale, xs * clip)
    xc = xs - xs.mean(axis=2, keepdims=True)
    yc = yp - yp.mean(axis=2, keepdims=True)
    xc /= np.linalg.norm(xc, axis=2, keepdims=True) + _EPS
    yc /= np.linalg.norm(yc, axis=2, keepdims=True) + _EPS
    score = float(np.mean(np.sum(xc * yc, axis=2)))
    return min(max(score, 0.0), 1.0)


# -- segmental SNR -----------------------------------------------------------

SEGSNR_MIN_DB = -10.0
SEGSNR_MAX_DB = 35.0


def segmental_snr(clean, processed, fs=16000, frame_ms=32.0):
    """Mean per-frame SNR over non-overlapping frames, each clamped to [-10, 35] dB.

    Frames whose clean energy is below 1e-8 of the loudest frame are skipped.
    """
    x = np.asarray(clean, dtype=float)
    y = np.asarray(processed, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError(f"signals must be 1-D and equally long, got {x.shape} and {y.shape}")
    n = int(round(fs * frame_ms / 1000.0))
    count = x.size // n
    if count == 0:
        raise MetricError("signal shorter than one frame")
    xf = x[: count * n].reshape(count, n)
    ef = (x[: count * n] - y[: count * n]).reshape(count, n)
    signal_energy = np.sum(xf * xf, axis=1)
    error_energy = np.sum(ef * ef, axis=1)
    peak = signal_energy.max()
    if peak <= 0:
        raise MetricError("clean signal is silent; segmental SNR undefined")
    active = signal_energy >= 1e-8 * peak
    with np.errstate(divide="ignore"):
        snr = 10.0 * np.log10(signal_energy[active] / error_energy[active])
    return float(np.mean(np.clip(snr, SEGSNR_MIN_DB, SEGSNR_MAX_DB)))


# -- mixing ------------------------------------------------------------------


@dataclass(frozen=True)
class MixSpec:
    target_snr_db: float
    level_mode: str = "active_level"
    seed: int = 0
    frame_len: int = 512
    active_range_db: float = 35.0

    def __post_init__(self):
        if not np.isfinite(self.target_snr_db):
            raise MetricError("target SNR must be finite")
        if self.level_mode not in ("active_level", "rms"):
            raise MetricError(f"level_mode must be 'active_level' or 'rms', got {self.level_mode!r}")


def active_level(x, frame_len=512, range_db=35.0):
    """Mean power over frames within ``range_db`` of the loudest frame.

    A frame-energy stand-in for a full active-speech-level meter.
    """
    x = np.asarray(x, dtype=float)
    count = max(1, x.size // frame_len)
    frames = x[: count * frame_len].reshape(count, -1) if x.size >= frame_len else x[None, :]
    power = np.mean(frames**2, axis=1)
    if power.max() <= 0:
        return 0.0
    active = power >= power.max() * 10.0 ** (-range_db / 10.0)
    return float(np.mean(power[active]))


def _level(x, spec):
    if spec.level_mode == "rms":
        return float(np.mean(np.asarray(x, dtype=float) ** 2))
    return active_level(x, spec.frame_len, spec.active_range_db)


def mix_components(clean, noise, spec):
    """Return ``(noisy, clean, scaled_noise, scale)`` for the requested SNR.

    The noise excerpt starts at a seed-chosen offset.  Speech level follows
    ``spec.level_mode``; the noise level is always its mean power.
    """
    s = np.asarray(clean, dtype=float)
    w = np.asarray(noise, dtype=float)
    if w.size < s.size:
        raise MetricError(f"noise has {w.size} samples, clean has {s.size}; noise must be at least as long")
    rng = np.random.default_rng(spec.seed)
    offset = int(rng.integers(0, w.size - s.size + 1))
    w = w[offset:offset + s.size]
    speech_power = _level(s, spec)
    noise_power = float(np.mean(w**2))
    if speech_power <= 0:
        raise MetricError("clean signal has zero energy")
    if noise_power <= 0:
        raise MetricError("noise excerpt has zero energy")
    scale = np.sqrt(speech_power / (noise_power * 10.0 ** (spec.target_snr_db / 10.0)))
    scaled = scale * w
    return s + scaled, s, scaled, float(scale)


def mix_at_snr(clean, noise, spec):
    return mix_components(clean, noise, spec)[0]


# -- speech-shaped noise -------------------------------------------------------


def lpc(x, order=12):
    """All-pole coefficients ``[1, a1, ..., a_order]`` by the autocorrelation method."""
    x = np.asarray(x, dtype=float)
    if x.size <= order:
        raise MetricError("signal too short for the requested LPC order")
    r = np.array([np.dot(x[: x.size - k], x[k:]) for k in range(order + 1)])
    if r[0] <= 0:
        raise MetricError("LPC reference has zero energy")
    coeffs = solve_toeplitz(r[:-1], -r[1:])
    return np.concatenate(([1.0], coeffs))


def gen_ssn(reference, length, seed=0, fs=16000, order=12, warmup=8192):
    """Speech-shaped noise: seeded white Gaussian noise through an LPC all-pole filter.

    ``reference`` is one signal or a sequence of signals (concatenated); it
    must total at least 5 s.  The output has unit RMS.
    """
    if isinstance(reference, np.ndarray) and reference.ndim == 1:
        ref = reference.astype(float)
    else:
        ref = np.concatenate([np.asarray(r, dtype=float).ravel() for r in reference])
    if ref.size < 5 * fs:
        raise MetricError(f"reference totals {ref.size / fs:.2f} s; need at least 5 s")
    if length <= 0:
        raise MetricError("length must be positive")
    a = lpc(ref, order)
    if np.any(np.abs(np.roots(a)) >= 1.0):
        raise ArithmeticError("LPC filter is unstable")
    rng = np.random.default_rng(seed)
    excitation = rng.standard_normal(int(length) + warmup)
    out = lfilter([1.0], a, excitation)[warmup:]
    return out / np.sqrt(np.mean(out**2))


def synthetic_speech(duration=3.0, fs=16000, seed=0, level=0.1):
    """Seeded speech-like test signal.

    A sequence of voiced syllables (150-300 ms, declining f0 in 110-170 Hz,
    three formants gliding across each syllable, raised-sine envelope), some
    followed by a 3-7 kHz fricative burst, separated by short pauses.  The
    result has RMS ``level``.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration * fs))
    if n < fs // 2:
        raise MetricError("synthetic speech needs at least 0.5 s")
    x = np.zeros(n)
    fric_b, fric_a = butter(4, [3000.0, 7000.0], btype="band", fs=fs)
    pos = int(0.1 * fs)
    while pos < n - int(0.2 * fs):
        length = min(int(rng.uniform(0.15, 0.3) * fs), n - pos)
        t = np.arange(length) / fs
        glide = t / t[-1]
        f0 = rng.uniform(110.0, 170.0) * (1.0 - 0.15 * glide)
        phase = 2.0 * np.pi * np.cumsum(f0) / fs
        start = [rng.uniform(300, 800), rng.uniform(900, 2300), rng.uniform(2400, 3200)]
        end = [f * rng.uniform(0.8, 1.2) for f in start]
        seg = np.zeros(length)
        for h in range(1, 60):
            fh = h * f0
            if fh.min() > 0.475 * fs:
                break
            env = 0.02
            for a, b, g in zip(start, end, (1.0, 0.6, 0.3)):
                centre = (1.0 - glide) * a + glide * b
                env = env + g * np.exp(-0.5 * ((fh - centre) / (80.0 + 0.1 * a)) ** 2)
            seg += np.where(fh < 0.4875 * fs, env * np.cos(h * phase) / np.sqrt(h), 0.0)
        x[pos:pos + length] += seg * np.sin(np.pi * np.arange(length) / length) ** 1.5
        pos += length
        if rng.random() < 0.3 and pos < n:
            flen = min(int(rng.uniform(0.05, 0.12) * fs), n - pos)
            burst = lfilter(fric_b, fric_a, rng.standard_normal(flen)) * np.hanning(flen) * 0.3
            x[pos:pos + flen] += burst
            pos += flen
        pos += int(rng.uniform(0.03, 0.15) * fs)
    return level * x / np.sqrt(np.mean(x**2))
