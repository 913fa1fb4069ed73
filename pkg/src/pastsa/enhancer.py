"""Frame-recursive enhancement: trackers, gain law, floor, noisy-phase resynthesis."""

from dataclasses import dataclass

import numpy as np

from .config import EnhancerConfig
from .gains import (
    GainContext,
    apply_gain_floor,
    gain_known_phase,
    gain_phase_blind,
    gain_uncertain_phase,
)
from .phase import delta_theta, noisy_phase_track, oracle_phase_track, stftpi, track_f0
from .stft import ConfigurationError, analyze, synthesize
from .tracking import noise_init, noise_update, snr_init, snr_update

__all__ = ["EnhancementResult", "enhance_spectrogram", "enhance_signal", "phase_track_for"]


@dataclass
class EnhancementResult:
    spectrogram: object
    gains: np.ndarray  # floored gain per (frame, bin)
    noise_psd: np.ndarray
    xi: np.ndarray


def _gain_law(config):
    if config.variant == "phase_blind":
        return gain_phase_blind
    if config.variant == "known_phase":
        return gain_known_phase
    points, method = config.quadrature_points, config.phase_integration

    def law(ctx):
        return gain_uncertain_phase(ctx, quadrature_points=points, method=method)

    return law


def enhance_spectrogram(noisy, phase_estimate, config, return_details=False):
    """Enhance a noisy Spectrogram.

    ``phase_estimate`` is a PhaseTrack (clean-phase estimate plus per-bin
    concentration) and is required by the phase-aware variants; it only
    enters the gain through the phase deviation.  The output keeps the noisy
    phase.
    """
    config.validate()
    if noisy.geometry != config.geometry:
        raise ConfigurationError("spectrogram framing does not match the configuration")
    variant = config.variant
    if variant != "phase_blind":
        if phase_estimate is None:
            raise ConfigurationError(f"variant {variant!r} needs a clean-phase estimate")
        if phase_estimate.theta_s.shape != noisy.coeffs.shape:
            raise ConfigurationError("phase estimate shape does not match the spectrogram")

    law = _gain_law(config)
    alpha, beta = config.cost_parameters()
    params = config.tracker_params
    amplitude = noisy.magnitude
    noisy_phase = noisy.phase
    power = amplitude**2
    n_frames, n_bins = amplitude.shape

    tracker = noise_init(power, params)
    snr = snr_init(n_bins, config.xi_min)
    prev_amp = np.zeros(n_bins)
    gains = np.empty((n_frames, n_bins))
    noise_log = np.empty((n_frames, n_bins))
    xi_log = np.empty((n_frames, n_bins))

    for p in range(n_frames):
        tracker = noise_update(tracker, power[p], params)
        sigma2 = tracker.noise_psd
        if variant == "phase_blind":
            dtheta, tau = 0.0, 0.0
        else:
            dtheta = delta_theta(noisy_phase[p], phase_estimate.theta_s[p])
            tau = phase_estimate.tau[p] if variant == "uncertain_phase" else 0.0

        def gain_fn(xi, gamma):
            # the law needs a strictly positive a-posteriori SNR
            ctx = GainContext(
                zeta=xi,
                gamma=np.maximum(gamma, 1e-300),
                noise_psd=sigma2,
                mu=config.mu,
                alpha=alpha,
                beta=beta,
                delta_theta=dtheta,
                tau=tau,
            )
            return law(ctx)

        snr = snr_update(
            snr, amplitude[p], sigma2, prev_amp, gain_fn, smoothing=config.dd_smoothing, xi_min=config.xi_min
        )
        gain = apply_gain_floor(gain_fn(snr.xi, snr.gamma), config.gain_floor_db)
        # Ahat / R is unbounded at R = 0 and multiplies nothing there
        gain = np.where(amplitude[p] > 0, gain, 1.0)
        gains[p] = gain
        noise_log[p] = sigma2
        xi_log[p] = snr.xi
        prev_amp = gain * amplitude[p]

    out = noisy.with_coeffs(gains * noisy.coeffs)
    if return_details:
        return EnhancementResult(out, gains, noise_log, xi_log)
    return out


def phase_track_for(config, noisy_spec, noisy_signal=None, clean_spec=None, f0_track=None):
    """Build the PhaseTrack the configured phase source calls for."""
    source = config.phase_source
    if config.variant == "phase_blind":
        return None
    if source == "noisy":
        return noisy_phase_track(noisy_spec)
    if source == "oracle_file":
        if clean_spec is None:
            raise ConfigurationError("phase_source 'oracle_file' needs a clean reference signal")
        if clean_spec.coeffs.shape != noisy_spec.coeffs.shape:
            raise ConfigurationError("clean reference and noisy input differ in length")
        return oracle_phase_track(clean_spec, tau=config.tau_voiced)
    if f0_track is None:
        if noisy_signal is None:
            raise ConfigurationError("phase_source 'stftpi' needs the noisy signal or an f0 track")
        f0_track = track_f0(
            noisy_signal,
            config.geometry,
            config.f0_min,
            config.f0_max,
            config.voicing_threshold,
            config.f0_median_frames,
        )
    return stftpi(noisy_spec, f0_track, config.tau_voiced)


def enhance_signal(noisy, config=None, clean=None, f0_track=None, return_details=False):
    """Time-domain convenience wrapper; output has the input's length."""
    config = (config or EnhancerConfig()).validate()
    x = np.asarray(noisy, dtype=float)
    geom = config.geometry
    spec = analyze(x, geom)
    clean_spec = analyze(np.asarray(clean, dtype=float), geom) if clean is not None else None
    track = phase_track_for(config, spec, x, clean_spec, f0_track)
    result = enhance_spectrogram(spec, track, config, return_details=True)
    y = synthesize(result.spectrogram, x.size)
    if return_details:
        return y, result
    return y
