"""Mono WAV reading/writing (16-bit PCM and 32-bit float)."""

import numpy as np
from scipy.io import wavfile

__all__ = ["WavFormatError", "read_wav", "write_wav"]


class WavFormatError(ValueError):
    """The file is not a supported mono WAV."""


def read_wav(path):
    """Return ``(samples, sample_rate)`` with samples as float64 in [-1, 1)."""
    try:
        rate, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise WavFormatError(f"{path}: {exc}") from exc
    if data.ndim != 1:
        raise WavFormatError(f"{path}: {data.shape[1]} channels; only mono input is supported")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise WavFormatError(f"{path}: unsupported sample format {data.dtype} (need int16 or float32)")
    return x, int(rate)


def write_wav(path, samples, sample_rate, fmt="float32"):
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise WavFormatError("only mono output is supported")
    if fmt == "float32":
        data = x.astype(np.float32)
    elif fmt == "int16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise WavFormatError(f"unknown output format {fmt!r}")
    wavfile.write(path, int(sample_rate), data)
