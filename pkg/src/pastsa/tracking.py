"""Recursive per-bin statistics: SPP noise PSD tracker and decision-directed SNR."""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NOISE_FLOOR",
    "NoiseTrackerParams",
    "NoiseTrackerState",
    "SnrState",
    "speech_presence_probability",
    "noise_init",
    "noise_update",
    "snr_init",
    "snr_update",
]

NOISE_FLOOR = 1e-12


@dataclass(frozen=True)
class NoiseTrackerParams:
    prior_snr_db: float = 15.0
    spp_smoothing: float = 0.9
    psd_smoothing: float = 0.8
    stagnation_limit: float = 0.99
    init_frames: int = 5

    @property
    def prior_snr(self):
        return 10.0 ** (self.prior_snr_db / 10.0)


@dataclass
class NoiseTrackerState:
    noise_psd: np.ndarray
    smoothed_spp: np.ndarray


@dataclass
class SnrState:
    xi: np.ndarray
    gamma: np.ndarray
    prev_amp: np.ndarray


def speech_presence_probability(frame_power, noise_psd, prior_snr):
    """A-posteriori SPP with fixed prior SNR and equal hypothesis priors."""
    gamma = np.asarray(frame_power, dtype=float) / noise_psd
    k = prior_snr / (1.0 + prior_snr)
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + (1.0 + prior_snr) * np.exp(-gamma * k))


def noise_init(power, params=NoiseTrackerParams()):
    """Seed the tracker with the mean periodogram of the first frames.

    ``power`` is the (frames, bins) periodogram ``|Y|^2``.
    """
    power = np.atleast_2d(np.asarray(power, dtype=float))
    seed = power[: max(1, params.init_frames)].mean(axis=0)
    return NoiseTrackerState(np.maximum(seed, NOISE_FLOOR), np.zeros_like(seed))


def noise_update(state, frame_power, params=NoiseTrackerParams()):
    frame_power = np.asarray(frame_power, dtype=float)
    if np.any(frame_power < 0):
        raise ValueError("frame power must be non-negative")
    spp = speech_presence_probability(frame_power, state.noise_psd, params.prior_snr)
    smoothed = params.spp_smoothing * state.smoothed_spp + (1.0 - params.spp_smoothing) * spp
    # stagnation guard: a bin stuck at "speech present" would never update
    spp = np.where(smoothed > params.stagnation_limit, np.minimum(spp, params.stagnation_limit), spp)
    noise_mmse = spp * state.noise_psd + (1.0 - spp) * frame_power
    psd = params.psd_smoothing * state.noise_psd + (1.0 - params.psd_smoothing) * noise_mmse
    return NoiseTrackerState(np.maximum(psd, NOISE_FLOOR), np.clip(smoothed, 0.0, 1.0))


def snr_init(n_bins, xi_min):
    zeros = np.zeros(n_bins)
    return SnrState(np.full(n_bins, xi_min), zeros.copy(), zeros.copy())


def snr_update(state, amplitude, noise_psd, prev_amp, gain_fn, smoothing=0.98, xi_min=10 ** (-2.5)):
    """Two-stage decision-directed a-priori SNR.

    ``gain_fn(xi, gamma)`` is the configured gain law (before flooring); the
    second stage re-runs decision-directed smoothing with the amplitude that
    law produces at the first-stage estimate.
    """
    amplitude = np.asarray(amplitude, dtype=float)
    noise_psd = np.asarray(noise_psd, dtype=float)
    if np.any(noise_psd <= 0):
        raise ValueError("noise PSD must be positive")
    gamma = amplitude**2 / noise_psd
    inst = (1.0 - smoothing) * np.maximum(gamma - 1.0, 0.0)
    xi1 = np.maximum(smoothing * np.asarray(prev_amp, dtype=float) ** 2 / noise_psd + inst, xi_min)
    g = gain_fn(xi1, gamma)
    xi = smoothing * (g * amplitude) ** 2 / noise_psd + inst
    return SnrState(np.maximum(xi, xi_min), gamma, np.asarray(prev_amp, dtype=float))
