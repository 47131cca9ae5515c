"""Minimal WAV I/O: mono 16-bit PCM, multi-channel downmixed by channel mean."""

import numpy as np
from scipy.io import wavfile

from ..errors import DataError

_INT16_SCALE = 32768.0


def read_wav(path):
    """Read a 16-bit PCM WAV file.

    Returns (waveform, sample_rate) with the waveform as float64 in
    [-1, 1). Multi-channel audio is downmixed by averaging channels.
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise DataError(f"audio file not found: {path}") from None
    except Exception as exc:
        raise DataError(f"cannot read WAV file {path}: {exc}") from exc
    if data.dtype != np.int16:
        raise DataError(
            f"{path}: expected 16-bit PCM, got dtype {data.dtype}"
        )
    wave = data.astype(np.float64) / _INT16_SCALE
    if wave.ndim == 2:
        wave = wave.mean(axis=1)
    return wave, int(rate)


def write_wav(path, waveform, sample_rate):
    """Write a float waveform in [-1, 1] as mono 16-bit PCM."""
    waveform = np.asarray(waveform, dtype=np.float64)
    pcm = np.clip(np.round(waveform * _INT16_SCALE), -32768, 32767).astype(np.int16)
    wavfile.write(path, int(sample_rate), pcm)
