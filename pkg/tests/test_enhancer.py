import numpy as np
import pytest

from pastsa.config import EnhancerConfig
from pastsa.enhancer import enhance_signal, enhance_spectrogram, phase_track_for
from pastsa.gains import GainContext, gain_known_phase
from pastsa.metrics import synthetic_speech
from pastsa.phase import F0Track, noisy_phase_track, oracle_phase_track
from pastsa.stft import ConfigurationError, FrameGeometry, analyze, interior_slice

FS = 16000
FLOOR = 10 ** (-15 / 20)


@pytest.fixture(scope="module")
def noisy_pair():
    clean = synthetic_speech(1.5, FS, seed=1)
    noise = 0.1 * np.random.default_rng(0).standard_normal(clean.size)
    return clean, clean + noise


def _level_db(y, x, sl):
    return 20 * np.log10(np.linalg.norm(y[sl]) / np.linalg.norm(x[sl]))


@pytest.mark.parametrize("variant", ["phase_blind", "known_phase"])
def test_gain_floor_and_noisy_phase(noisy_pair, variant):
    clean, noisy = noisy_pair
    cfg = EnhancerConfig(variant=variant)
    spec = analyze(noisy)
    track = phase_track_for(cfg, spec, noisy, analyze(clean))
    out = enhance_spectrogram(spec, track, cfg)
    mag_in = np.abs(spec.coeffs)
    nz = mag_in > 0
    assert np.all(np.abs(out.coeffs)[nz] / mag_in[nz] >= FLOOR - 1e-12)
    # reconstruction keeps the noisy phase in every variant
    np.testing.assert_allclose(np.angle(out.coeffs)[nz], np.angle(spec.coeffs)[nz], atol=1e-12)


def test_missing_phase_estimate():
    spec = analyze(np.random.default_rng(1).standard_normal(4096))
    for variant in ("known_phase", "uncertain_phase"):
        with pytest.raises(ConfigurationError, match="clean-phase estimate"):
            enhance_spectrogram(spec, None, EnhancerConfig(variant=variant))
    with pytest.raises(ConfigurationError, match="needs a clean reference"):
        phase_track_for(EnhancerConfig(), spec)


def test_framing_and_shape_mismatch():
    spec = analyze(np.random.default_rng(2).standard_normal(4096), FrameGeometry(16000, 256, 128, 256))
    with pytest.raises(ConfigurationError, match="framing"):
        enhance_spectrogram(spec, None, EnhancerConfig(variant="phase_blind"))
    spec = analyze(np.random.default_rng(2).standard_normal(4096))
    short = oracle_phase_track(analyze(np.zeros(3000)))
    with pytest.raises(ConfigurationError, match="shape"):
        enhance_spectrogram(spec, short, EnhancerConfig())


def test_noiseless_oracle_near_transparent():
    clean = synthetic_speech(2.0, FS, seed=2)
    out = enhance_signal(clean, EnhancerConfig(), clean=clean)
    sl = interior_slice(FrameGeometry(), clean.size)
    err = out[sl] - clean[sl]
    assert 10 * np.log10(np.sum(clean[sl] ** 2) / np.sum(err**2)) >= 20.0


def test_sinusoid_after_silence_phase_blind():
    # the tracker first sees the noise-free background, then the tone starts
    t = np.arange(2 * FS) / FS
    x = np.where(t >= 0.25, np.sin(2 * np.pi * 1000 * t), 0.0)
    y = enhance_signal(x, EnhancerConfig(variant="phase_blind"))
    settled = slice(int(0.35 * FS), int(1.25 * FS))
    assert abs(_level_db(y, x, settled)) <= 1.5
    err = np.linalg.norm(y[settled] - x[settled]) / np.linalg.norm(x[settled])
    assert 20 * np.log10(err) <= -15.0


def test_stationary_sinusoid_from_start_is_learned_as_noise():
    # no noise-free stretch: the noise estimate is seeded with the tone itself
    t = np.arange(2 * FS) / FS
    x = np.sin(2 * np.pi * 1000 * t)
    y = enhance_signal(x, EnhancerConfig(variant="phase_blind"))
    sl = interior_slice(FrameGeometry(), x.size)
    assert _level_db(y, x, sl) == pytest.approx(-15.0, abs=0.01)


def test_silent_bins_keep_finite_gains():
    x = np.concatenate((np.zeros(FS // 2), synthetic_speech(1.0, FS, seed=3)))
    _, res = enhance_signal(x, EnhancerConfig(variant="phase_blind"), return_details=True)
    assert np.all(np.isfinite(res.gains))
    assert np.all(res.gains[:10] == 1.0)


def _replay(noisy_spec, clean_spec, mu, alpha, beta):
    """Frame loop written out from scratch for one fixed cost setting."""
    power = np.abs(noisy_spec.coeffs) ** 2
    amp = np.sqrt(power)
    xi_h1 = 10**1.5
    psd = np.maximum(power[:5].mean(axis=0), 1e-12)
    smoothed = np.zeros_like(psd)
    prev = np.zeros_like(psd)
    xi_min = 10**-2.5
    gains = []
    for p in range(power.shape[0]):
        spp = 1 / (1 + (1 + xi_h1) * np.exp(-power[p] / psd * xi_h1 / (1 + xi_h1)))
        smoothed = 0.9 * smoothed + 0.1 * spp
        spp = np.where(smoothed > 0.99, np.minimum(spp, 0.99), spp)
        psd = np.maximum(0.8 * psd + 0.2 * (spp * psd + (1 - spp) * power[p]), 1e-12)
        gamma = power[p] / psd
        # phases taken separately: angle(0) is 0 on each side
        diff = np.angle(noisy_spec.coeffs[p]) - np.angle(clean_spec.coeffs[p])
        dt = np.angle(np.exp(1j * diff))

        def law(z):
            return gain_known_phase(
                GainContext(zeta=z, gamma=np.maximum(gamma, 1e-300), mu=mu, alpha=alpha, beta=beta, delta_theta=dt)
            )

        inst = 0.02 * np.maximum(gamma - 1, 0)
        xi1 = np.maximum(0.98 * prev**2 / psd + inst, xi_min)
        xi = np.maximum(0.98 * (law(xi1) * amp[p]) ** 2 / psd + inst, xi_min)
        g = np.maximum(law(xi), FLOOR)
        g = np.where(amp[p] > 0, g, 1.0)
        gains.append(g)
        prev = g * amp[p]
    return np.array(gains)


def test_fixed_parameter_baseline_matches_replay(noisy_pair):
    clean, noisy = noisy_pair
    clean, noisy = clean[: FS // 2], noisy[: FS // 2]
    cfg = EnhancerConfig(param_mode="fixed", fixed_alpha=0.0, fixed_beta=0.5, mu=0.5)
    spec, clean_spec = analyze(noisy), analyze(clean)
    res = enhance_spectrogram(spec, oracle_phase_track(clean_spec), cfg, return_details=True)
    np.testing.assert_allclose(res.gains, _replay(spec, clean_spec, 0.5, 0.0, 0.5), rtol=1e-12)


def test_uncertain_phase_limits_in_pipeline(noisy_pair):
    clean, noisy = noisy_pair
    clean, noisy = clean[: FS // 2], noisy[: FS // 2]
    spec = analyze(noisy)
    blind = enhance_spectrogram(spec, None, EnhancerConfig(variant="phase_blind"), return_details=True)
    # a phase estimate with zero concentration carries no information
    flat = enhance_spectrogram(
        spec, noisy_phase_track(spec), EnhancerConfig(variant="uncertain_phase"), return_details=True
    )
    np.testing.assert_allclose(flat.gains, blind.gains, rtol=1e-6)
    known = enhance_spectrogram(spec, oracle_phase_track(analyze(clean)), EnhancerConfig(), return_details=True)
    sharp = enhance_spectrogram(
        spec, oracle_phase_track(analyze(clean), tau=1e6), EnhancerConfig(variant="uncertain_phase"), return_details=True
    )
    np.testing.assert_allclose(sharp.gains, known.gains, rtol=1e-3)


def test_uncertain_phase_with_stftpi():
    clean = synthetic_speech(0.6, FS, seed=4)
    noisy = clean + 0.05 * np.random.default_rng(3).standard_normal(clean.size)
    cfg = EnhancerConfig(variant="uncertain_phase", phase_source="stftpi")
    y, res = enhance_signal(noisy, cfg, return_details=True)
    assert y.shape == noisy.shape
    assert np.all(np.isfinite(y))
    assert np.all(res.gains >= FLOOR - 1e-12)


def test_external_f0_track_is_used():
    x = synthetic_speech(0.6, FS, seed=5)
    spec = analyze(x)
    n = spec.n_frames
    unvoiced = F0Track(np.zeros(n), np.zeros(n, dtype=bool))
    track = phase_track_for(EnhancerConfig(variant="uncertain_phase", phase_source="stftpi"), spec, x, f0_track=unvoiced)
    np.testing.assert_array_equal(track.theta_s, spec.phase)
    assert not track.tau.any()


def test_phase_sources():
    x = np.random.default_rng(6).standard_normal(4096)
    spec = analyze(x)
    assert phase_track_for(EnhancerConfig(variant="phase_blind"), spec) is None
    noisy = phase_track_for(EnhancerConfig(phase_source="noisy"), spec)
    assert not noisy.tau.any()
    oracle = phase_track_for(EnhancerConfig(tau_voiced=3.0), spec, clean_spec=spec)
    assert np.all(oracle.tau == 3.0)
    with pytest.raises(ConfigurationError):
        phase_track_for(EnhancerConfig(phase_source="stftpi"), spec)


def test_deterministic(noisy_pair):
    clean, noisy = noisy_pair
    a = enhance_signal(noisy, EnhancerConfig(), clean=clean)
    b = enhance_signal(noisy, EnhancerConfig(), clean=clean)
    np.testing.assert_array_equal(a, b)
