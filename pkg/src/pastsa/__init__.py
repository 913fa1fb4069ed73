"""Phase-aware Bayesian spectral amplitude estimation for speech enhancement."""

__version__ = "0.1.0"
