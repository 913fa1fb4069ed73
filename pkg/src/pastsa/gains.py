"""Bayesian STSA gain laws under a generalized-Gamma (chi) amplitude prior.

The cost ``((A**beta - Ahat**beta) / A**alpha)**2`` gives

    Ahat = (E{A^(beta-2 alpha) | Y} / E{A^(-2 alpha) | Y}) ** (1/beta)

and the three laws differ only in the phase prior: a von Mises density of
concentration ``tau`` around a clean-phase estimate (uncertain phase), its
``tau -> inf`` limit (known phase) and ``tau = 0`` (phase blind).  Every
law returns the gain ``Ahat / R`` with ``R = sigma_w * sqrt(gamma)``, so the
absolute noise level cancels.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .specfun import log_gamma, log_kummer_m, log_pcf_d_scaled, log_pcf_phase_average
from .stft import ConfigurationError

__all__ = [
    "QuadratureWarning",
    "GainContext",
    "ParamSchedule",
    "alpha_schedule",
    "beta_schedule",
    "gain_known_phase",
    "gain_phase_blind",
    "gain_uncertain_phase",
    "apply_gain_floor",
    "check_gamma_arguments",
]


class QuadratureWarning(RuntimeWarning):
    """Phase quadrature did not stabilize within its point budget."""


def check_gamma_arguments(mu, alpha, beta):
    """Reject (mu, alpha, beta) for which the moment Gamma arguments are <= 0."""
    mu, alpha, beta = (np.asarray(v, dtype=float) for v in (mu, alpha, beta))
    if np.any(mu <= 0):
        raise ConfigurationError("shape parameter mu must be > 0")
    if np.any(beta <= 0):
        raise ConfigurationError("cost exponent beta must be > 0")
    if np.any(2 * mu - 2 * alpha <= 0):
        raise ConfigurationError(
            "need 2*mu - 2*alpha > 0 (argument of Gamma(2mu - 2alpha)); "
            f"got max alpha={float(np.max(alpha)):g} with mu={float(np.min(mu)):g}"
        )
    if np.any(beta - 2 * alpha + 2 * mu <= 0):
        raise ConfigurationError("need beta - 2*alpha + 2*mu > 0 (argument of Gamma(2mu + beta - 2alpha))")


def _wrap(phase):
    return np.pi - np.mod(np.pi - phase, 2.0 * np.pi)


@dataclass
class GainContext:
    """Per-bin inputs of a gain law; fields may be arrays that broadcast."""

    zeta: object
    gamma: object
    noise_psd: object = 1.0
    mu: object = 1.0
    alpha: object = 0.0
    beta: object = 1.0
    delta_theta: object = 0.0
    tau: object = 0.0

    def __post_init__(self):
        for name in ("zeta", "gamma", "noise_psd", "mu", "alpha", "beta", "delta_theta", "tau"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.delta_theta = _wrap(self.delta_theta)

    def validate(self):
        check_gamma_arguments(self.mu, self.alpha, self.beta)
        if np.any(self.zeta <= 0) or np.any(self.gamma <= 0):
            raise ValueError("zeta and gamma must be positive")
        if np.any(self.noise_psd <= 0):
            raise ValueError("noise PSD must be positive")
        if np.any(self.tau < 0):
            raise ValueError("von Mises concentration tau must be >= 0")

    def replace(self, **changes):
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return GainContext(**fields)

    @property
    def amplitude(self):
        return np.sqrt(self.noise_psd * self.gamma)

    def nu(self, delta_theta=None):
        """Parabolic-cylinder argument for a given noisy-minus-clean phase."""
        dt = self.delta_theta if delta_theta is None else delta_theta
        return -np.sqrt(self.gamma) * np.sqrt(2.0 * self.zeta / (self.mu + self.zeta)) * np.cos(dt)


def _scalar_out(value, ctx):
    if all(np.ndim(getattr(ctx, k)) == 0 for k in ctx.__dataclass_fields__):
        return float(value)
    return value


# ---------------------------------------------------------------------------
# frequency-dependent cost parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamSchedule:
    alpha_low: float = 0.2
    alpha_high: float = 0.8
    beta_low: float = 1.0
    beta_high: float = 0.2
    q: float = 16.54
    l: float = 1.0  # noqa: E741

    def alphas(self, freqs, fs):
        return alpha_schedule(freqs, fs, self)

    def betas(self, freqs, fs):
        return beta_schedule(freqs, fs, self)


def _check_band(f_k, fs):
    f = np.asarray(f_k, dtype=float)
    if np.any(f < 0) or np.any(f > fs / 2.0 + 1e-9):
        raise ValueError("frequency must lie in [0, fs/2]")
    return f


def alpha_schedule(f_k, fs, sched=ParamSchedule()):
    """Masking-motivated alpha: flat to 2 kHz, then linear up to Nyquist."""
    if fs / 2.0 <= 2000.0:
        raise ConfigurationError("alpha ramp needs fs/2 > 2 kHz")
    f = _check_band(f_k, fs)
    t = (f - 2000.0) / (fs / 2.0 - 2000.0)
    # convex form is exact at both ends of the ramp
    ramp = (1.0 - t) * sched.alpha_low + t * sched.alpha_high
    out = np.where(f <= 2000.0, sched.alpha_low, ramp)
    return float(out) if out.ndim == 0 else out


def beta_schedule(f_k, fs, sched=ParamSchedule()):
    """Loudness-compression beta on a log (tonotopic) frequency axis."""
    f = _check_band(f_k, fs)
    frac = np.log10(f / sched.q + sched.l) / np.log10((fs / 2.0) / sched.q + sched.l)
    out = (1.0 - frac) * sched.beta_low + frac * sched.beta_high
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# gain laws
# ---------------------------------------------------------------------------


def gain_known_phase(ctx):
    """Gain when the clean phase is known exactly (tau -> inf)."""
    ctx.validate()
    mu, a, b = ctx.mu, ctx.alpha, ctx.beta
    nu = ctx.nu()
    p_num = 2 * mu + b - 2 * a
    p_den = 2 * mu - 2 * a
    log_ratio = (
        log_gamma(p_num) - log_gamma(p_den)
        + log_pcf_d_scaled(-p_num, nu) - log_pcf_d_scaled(-p_den, nu)
    )
    # Ahat / R with R^2 = gamma * sigma_w^2
    log_gain = 0.5 * np.log(0.5 * ctx.zeta / ((mu + ctx.zeta) * ctx.gamma)) + log_ratio / b
    return _scalar_out(np.exp(log_gain), ctx)


def gain_phase_blind(ctx):
    """Gain under a uniform phase prior (tau = 0); independent of delta_theta."""
    ctx.validate()
    mu, a, b = ctx.mu, ctx.alpha, ctx.beta
    v = ctx.zeta * ctx.gamma / (mu + ctx.zeta)
    # log form: v is unbounded when the noise estimate is near zero
    log_num = log_kummer_m((2 + 2 * a - b - 2 * mu) / 2.0, 1.0, -v)
    log_den = log_kummer_m(1 + a - mu, 1.0, -v)
    log_ratio = log_gamma((-2 * a + b + 2 * mu) / 2.0) - log_gamma(mu - a) + log_num - log_den
    log_gain = 0.5 * np.log(ctx.zeta / ((mu + ctx.zeta) * ctx.gamma)) + log_ratio / b
    return _scalar_out(np.exp(log_gain), ctx)


def _log_phase_average(order_p, nu0, dtheta, tau, n_points):
    """log of sum_j exp(tau (cos phi_j - 1)) * Dscaled_{-p}(nu(phi_j)).

    phi_j are uniform offsets of the clean phase from its estimate, with a
    node on phi = 0 so a sharply concentrated prior is still sampled at its
    mode.  Constant factors (2 pi / N, von Mises normalizer) are dropped;
    they cancel in the moment ratio.
    """
    phi = 2.0 * np.pi * np.arange(n_points) / n_points
    shape = np.broadcast(order_p, nu0, dtheta, tau).shape
    p = np.broadcast_to(order_p, shape)[..., None]
    nu = -np.broadcast_to(nu0, shape)[..., None] * np.cos(np.broadcast_to(dtheta, shape)[..., None] - phi)
    logw = np.broadcast_to(tau, shape)[..., None] * (np.cos(phi) - 1.0)
    logd = log_pcf_d_scaled(-np.broadcast_to(p, nu.shape), nu)
    return logsumexp(logd + logw, axis=-1)


def gain_uncertain_phase(ctx, quadrature_points=256, max_points=16384, rtol=1e-6, method="trapezoid"):
    """Gain under a von Mises clean-phase prior of concentration ``ctx.tau``.

    The amplitude integral is closed-form (scaled parabolic cylinder).  With
    ``method="trapezoid"`` the phase integral uses the periodic trapezoidal
    rule, doubled from ``quadrature_points`` until the log-gain moves by less
    than ``rtol``.  ``method="bessel"`` integrates the phase analytically
    first (see ``log_pcf_phase_average``); it gives the same value, is far
    cheaper per bin, and is what the enhancer uses.
    """
    ctx.validate()
    if quadrature_points < 64:
        raise ValueError("quadrature_points must be >= 64")
    if method not in ("trapezoid", "bessel"):
        raise ValueError(f"unknown phase-integration method {method!r}")
    mu, a, b = ctx.mu, ctx.alpha, ctx.beta
    nu0 = np.sqrt(ctx.gamma) * np.sqrt(2.0 * ctx.zeta / (mu + ctx.zeta))
    p_num = 2 * mu + b - 2 * a
    p_den = 2 * mu - 2 * a
    base = 0.5 * np.log(0.5 * ctx.zeta / ((mu + ctx.zeta) * ctx.gamma)) + (log_gamma(p_num) - log_gamma(p_den)) / b

    if method == "bessel":
        ratio = (
            log_pcf_phase_average(-p_num, nu0, ctx.delta_theta, ctx.tau)
            - log_pcf_phase_average(-p_den, nu0, ctx.delta_theta, ctx.tau)
        )
        return _scalar_out(np.exp(base + ratio / b), ctx)

    def log_gain(n):
        ratio = (
            _log_phase_average(p_num, nu0, ctx.delta_theta, ctx.tau, n)
            - _log_phase_average(p_den, nu0, ctx.delta_theta, ctx.tau, n)
        )
        return base + ratio / b

    n = int(quadrature_points)
    prev = log_gain(n)
    while True:
        if 2 * n > max_points:
            warnings.warn(
                f"phase quadrature not stable to {rtol:g} with {n} points", QuadratureWarning, stacklevel=2
            )
            break
        cur = log_gain(2 * n)
        converged = np.all(np.abs(cur - prev) <= rtol)
        prev, n = cur, 2 * n
        if converged:
            break
    return _scalar_out(np.exp(prev), ctx)


def apply_gain_floor(gain, floor_db=-15.0):
    g = np.asarray(gain, dtype=float)
    if np.any(g < 0):
        raise ValueError("gain must be non-negative")
    out = np.maximum(g, 10.0 ** (floor_db / 20.0))
    return float(out) if out.ndim == 0 else out
