"""Clean-phase estimates for the phase-aware gain laws.

Voiced frames get a harmonic-model reconstruction: each bin is assigned the
harmonic of f0 nearest its centre frequency, the bin closest to each
harmonic advances its phase by ``2 pi f_h hop / fs`` per frame, and the
remaining bins of that harmonic are offset by the analysis window's phase
response.  Unvoiced frames keep the noisy phase and carry ``tau = 0``.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .stft import window_phase_response

__all__ = [
    "PhaseTrack",
    "F0Track",
    "wrap_phase",
    "delta_theta",
    "estimate_f0",
    "track_f0",
    "stftpi",
    "oracle_phase_track",
    "noisy_phase_track",
    "read_f0_csv",
    "write_f0_csv",
]

F0_MIN = 60.0
F0_MAX = 400.0
VOICING_THRESHOLD = 0.45


def wrap_phase(x):
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2.0 * np.pi)


def delta_theta(theta_y, theta_s_est):
    out = wrap_phase(np.asarray(theta_y, dtype=float) - np.asarray(theta_s_est, dtype=float))
    return float(out) if out.ndim == 0 else out


@dataclass
class F0Track:
    f0: np.ndarray  # Hz, 0 where unvoiced
    voiced: np.ndarray

    def __len__(self):
        return len(self.f0)


@dataclass
class PhaseTrack:
    """Per-frame clean-phase estimate with its von Mises concentration."""

    theta_s: np.ndarray  # (frames, bins)
    tau: np.ndarray  # (frames, bins)
    f0: np.ndarray = None
    voiced: np.ndarray = None


def estimate_f0(frame, fs, f0_min=F0_MIN, f0_max=F0_MAX, threshold=VOICING_THRESHOLD):
    """Normalized-autocorrelation pitch estimate of one analysis frame.

    Returns ``(f0_hz, voiced)``; f0 is 0.0 for unvoiced frames.  The frame
    must span at least two periods of ``f0_min``.
    """
    x = np.asarray(frame, dtype=float)
    lag_min = int(np.floor(fs / f0_max))
    lag_max = int(np.ceil(fs / f0_min))
    if x.size < 2 * fs / f0_min:
        raise ValueError(f"frame of {x.size} samples is shorter than two periods of {f0_min} Hz")
    x = x - x.mean()
    energy = np.dot(x, x)
    if energy <= 1e-20 * x.size:
        return 0.0, False

    lags = np.arange(lag_min - 1, lag_max + 2)
    r = np.empty(lags.size)
    csum = np.concatenate(([0.0], np.cumsum(x * x)))
    n = x.size
    for i, lag in enumerate(lags):
        a, b = x[: n - lag], x[lag:]
        ea = csum[n - lag]
        eb = csum[n] - csum[lag]
        r[i] = np.dot(a, b) / np.sqrt(ea * eb) if ea > 0 and eb > 0 else 0.0

    inner = r[1:-1]
    peak = float(inner.max())
    if peak < threshold:
        return 0.0, False
    # first local maximum close to the global one avoids octave-down errors
    is_max = (inner >= r[:-2]) & (inner >= r[2:])
    candidates = np.flatnonzero(is_max & (inner >= 0.9 * peak))
    i = int(candidates[0]) + 1 if candidates.size else int(np.argmax(inner)) + 1
    y0, y1, y2 = r[i - 1], r[i], r[i + 1]
    denom = y0 - 2.0 * y1 + y2
    shift = 0.5 * (y0 - y2) / denom if denom < 0 else 0.0
    lag = lags[i] + float(np.clip(shift, -0.5, 0.5))
    f0 = fs / lag
    if not (f0_min <= f0 <= f0_max):
        return 0.0, False
    return float(f0), True


def track_f0(signal, geom, f0_min=F0_MIN, f0_max=F0_MAX, threshold=VOICING_THRESHOLD, smooth=3):
    """f0 for every STFT frame, from a window centred on the frame centre.

    The pitch window spans two periods of ``f0_min`` (or the STFT window if
    longer).  Voiced f0 values are median-smoothed over ``smooth`` frames.
    """
    x = np.asarray(signal, dtype=float)
    fs = geom.sample_rate
    span = max(geom.window_len, int(np.ceil(2.0 * fs / f0_min)) + 2)
    pad = span
    xp = np.concatenate((np.zeros(pad), x, np.zeros(pad)))
    n_frames = geom.n_frames(x.size)
    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    for p in range(n_frames):
        centre = p * geom.hop + geom.window_len // 2 + pad
        seg = xp[centre - span // 2: centre - span // 2 + span]
        f0[p], voiced[p] = estimate_f0(seg, fs, f0_min, f0_max, threshold)
    if smooth > 1 and voiced.any():
        sm = f0.copy()
        # only voiced neighbours take part in the median
        for p in np.flatnonzero(voiced):
            lo, hi = max(0, p - smooth // 2), min(n_frames, p + smooth // 2 + 1)
            vals = f0[lo:hi][voiced[lo:hi]]
            sm[p] = np.median(vals)
        f0 = np.where(voiced, sm, 0.0)
    return F0Track(f0, voiced)


def _dominant_harmonics(f0, geom):
    """Harmonic index per bin and the bin nearest each harmonic."""
    fs, n_fft = geom.sample_rate, geom.fft_len
    n_harm = int(np.floor((fs / 2.0) / f0))
    if n_harm < 1:
        raise ValueError(f"f0 {f0} Hz leaves no harmonic below Nyquist")
    bin_freq = geom.bin_frequencies()
    # ties round toward the lower harmonic
    h = np.ceil(bin_freq / f0 - 0.5).astype(int)
    h = np.clip(h, 1, n_harm)
    centre = np.rint(np.arange(1, n_harm + 1) * f0 * n_fft / fs).astype(int)
    centre = np.clip(centre, 0, geom.n_bins - 1)
    return h, centre


def stftpi(noisy, f0_track, tau_voiced=4.0):
    """Harmonic-model STFT phase reconstruction of ``noisy`` (a Spectrogram)."""
    geom = noisy.geometry
    fs, hop, n_fft = geom.sample_rate, geom.hop, geom.fft_len
    noisy_phase = noisy.phase
    n_frames, n_bins = noisy_phase.shape
    if len(f0_track) != n_frames:
        raise ValueError(f"f0 track has {len(f0_track)} frames, spectrogram has {n_frames}")
    theta = noisy_phase.copy()
    tau = np.zeros((n_frames, n_bins))
    k = np.arange(n_bins)
    prev_voiced = False
    for p in range(n_frames):
        if not f0_track.voiced[p]:
            prev_voiced = False
            continue
        f0 = float(f0_track.f0[p])
        if f0 <= 0:
            raise ValueError(f"voiced frame {p} has non-positive f0 {f0}")
        h_of_bin, centre = _dominant_harmonics(f0, geom)
        f_h = np.arange(1, centre.size + 1) * f0
        if prev_voiced:
            anchor = theta[p - 1, centre] + 2.0 * np.pi * f_h * hop / fs
        else:
            anchor = noisy_phase[p, centre]
        # spread each harmonic's anchor phase over the bins it dominates
        frac = f_h * n_fft / fs
        hb = h_of_bin - 1
        offset_bin = k - frac[hb]
        offset_centre = centre[hb] - frac[hb]
        theta[p] = (
            anchor[hb]
            - window_phase_response(geom, offset_centre)
            + window_phase_response(geom, offset_bin)
        )
        theta[p, centre] = anchor
        theta[p] = wrap_phase(theta[p])
        tau[p] = tau_voiced
        prev_voiced = True
    return PhaseTrack(theta, tau, np.asarray(f0_track.f0, dtype=float), np.asarray(f0_track.voiced, dtype=bool))


def oracle_phase_track(clean_spec, tau=np.inf):
    """Clean STFT phase used as the estimate (oracle condition)."""
    phase = clean_spec.phase
    return PhaseTrack(phase, np.full(phase.shape, float(tau)))


def noisy_phase_track(noisy_spec):
    phase = noisy_spec.phase
    return PhaseTrack(phase, np.zeros(phase.shape))


def write_f0_csv(path, track):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", "f0_hz", "voiced_flag"])
        for i, (f, v) in enumerate(zip(track.f0, track.voiced)):
            w.writerow([i, repr(float(f)), int(bool(v))])


def read_f0_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((int(row["frame_index"]), float(row["f0_hz"]), int(row["voiced_flag"]) != 0))
    rows.sort()
    idx = [r[0] for r in rows]
    if idx != list(range(len(rows))):
        raise ValueError(f"{path}: frame indices must be 0..N-1 without gaps")
    return F0Track(np.array([r[1] for r in rows]), np.array([r[2] for r in rows], dtype=bool))
