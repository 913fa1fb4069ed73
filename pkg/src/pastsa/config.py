"""Enhancer configuration: one flat JSON document with exhaustive defaults."""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields

import numpy as np

from .gains import ParamSchedule, alpha_schedule, beta_schedule, check_gamma_arguments
from .stft import ConfigurationError, FrameGeometry
from .tracking import NoiseTrackerParams

__all__ = ["EnhancerConfig", "VARIANTS", "PARAM_MODES", "PHASE_SOURCES"]

VARIANTS = ("phase_blind", "known_phase", "uncertain_phase")
PARAM_MODES = ("auditory", "fixed")
PHASE_SOURCES = ("noisy", "oracle_file", "stftpi")


@dataclass
class EnhancerConfig:
    # framing
    sample_rate: int = 16000
    window_len: int = 512
    hop: int = 256
    fft_len: int = 512
    window: str = "hann"
    # estimator
    variant: str = "known_phase"
    param_mode: str = "auditory"
    alpha_low: float = 0.2
    alpha_high: float = 0.8
    beta_low: float = 1.0
    beta_high: float = 0.2
    q: float = 16.54
    l: float = 1.0  # noqa: E741
    fixed_alpha: float = 0.0
    fixed_beta: float = 0.5
    mu: float = 1.0
    tau_voiced: float = 4.0
    gain_floor_db: float = -15.0
    quadrature_points: int = 256
    phase_integration: str = "bessel"
    # trackers
    dd_smoothing: float = 0.98
    xi_min_db: float = -25.0
    spp_prior_snr_db: float = 15.0
    spp_smoothing: float = 0.9
    noise_psd_smoothing: float = 0.8
    spp_stagnation_limit: float = 0.99
    noise_init_frames: int = 5
    # phase source and f0 tracker
    phase_source: str = "oracle_file"
    f0_min: float = 60.0
    f0_max: float = 400.0
    voicing_threshold: float = 0.45
    f0_median_frames: int = 3
    seed: int = 0

    # -- derived objects ---------------------------------------------------

    @property
    def geometry(self):
        return FrameGeometry(self.sample_rate, self.window_len, self.hop, self.fft_len, self.window)

    @property
    def schedule(self):
        return ParamSchedule(self.alpha_low, self.alpha_high, self.beta_low, self.beta_high, self.q, self.l)

    @property
    def tracker_params(self):
        return NoiseTrackerParams(
            self.spp_prior_snr_db,
            self.spp_smoothing,
            self.noise_psd_smoothing,
            self.spp_stagnation_limit,
            self.noise_init_frames,
        )

    @property
    def xi_min(self):
        return 10.0 ** (self.xi_min_db / 10.0)

    def cost_parameters(self):
        """Per-bin (alpha, beta) arrays for the configured parameter mode."""
        geom = self.geometry
        if self.param_mode == "fixed":
            shape = (geom.n_bins,)
            return np.full(shape, float(self.fixed_alpha)), np.full(shape, float(self.fixed_beta))
        freqs = geom.bin_frequencies()
        sched = self.schedule
        return alpha_schedule(freqs, self.sample_rate, sched), beta_schedule(freqs, self.sample_rate, sched)

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {', '.join(VARIANTS)}; got {self.variant!r}")
        if self.param_mode not in PARAM_MODES:
            raise ConfigurationError(f"param_mode must be one of {', '.join(PARAM_MODES)}; got {self.param_mode!r}")
        if self.phase_source not in PHASE_SOURCES:
            raise ConfigurationError(
                f"phase_source must be one of {', '.join(PHASE_SOURCES)}; got {self.phase_source!r}"
            )
        try:
            self.geometry.validate()
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        if not 0.0 < self.dd_smoothing < 1.0:
            raise ConfigurationError("dd_smoothing must lie in (0, 1)")
        if self.tau_voiced < 0:
            raise ConfigurationError("tau_voiced must be >= 0")
        if self.phase_integration not in ("bessel", "trapezoid"):
            raise ConfigurationError("phase_integration must be 'bessel' or 'trapezoid'")
        if self.quadrature_points < 64:
            raise ConfigurationError("quadrature_points must be >= 64")
        if not 0 < self.f0_min < self.f0_max:
            raise ConfigurationError("need 0 < f0_min < f0_max")
        if self.noise_init_frames < 1:
            raise ConfigurationError("noise_init_frames must be >= 1")
        alpha, beta = self.cost_parameters()
        check_gamma_arguments(self.mu, alpha, beta)
        return self

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        values = {}
        for name, value in data.items():
            default = known[name].default
            # keep the declared type so a round-trip is exact
            if isinstance(default, bool) or isinstance(default, str):
                values[name] = value
            elif isinstance(default, int):
                if isinstance(value, float) and not value.is_integer():
                    raise ConfigurationError(f"{name} must be an integer, got {value}")
                values[name] = int(value)
            else:
                values[name] = float(value)
        return cls(**values)

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: expected a JSON object")
        return cls.from_dict(data).validate()
