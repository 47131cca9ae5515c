"""Base waveform preprocessing: resample, pad/crop to fixed length, normalize.

Every output has exactly ``round(duration_s * target_rate)`` samples (64000
at the 4 s / 16 kHz defaults). Short inputs are repeat-padded by default
(zero-padding is available via ``pad_mode`` since padding strategy is a
known source of silent recipe divergence); long inputs are cropped at a
random offset in training and at offset 0 elsewhere.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import resample_poly

from ..errors import EmptyWaveformError, InvalidRateError

PAD_MODES = ("repeat", "zeros")


@dataclass(frozen=True)
class TransformParams:
    sample_rate: int = 16000
    duration_s: float = 4.0
    normalize: bool = True
    pad_mode: str = "repeat"

    @property
    def num_samples(self):
        return int(round(self.duration_s * self.sample_rate))


def resample(waveform, source_rate, target_rate):
    """Polyphase resampling between integer rates."""
    if source_rate == target_rate:
        return waveform
    g = math.gcd(int(source_rate), int(target_rate))
    return resample_poly(waveform, int(target_rate) // g, int(source_rate) // g)


def fix_length(waveform, num_samples, rng=None, train=False, pad_mode="repeat"):
    """Pad or crop a waveform to exactly ``num_samples``.

    Padding tiles the waveform (truncating the final tile) in repeat mode,
    or appends zeros. Cropping takes a random start offset when ``train``
    and an rng are given, else the leading segment.
    """
    if pad_mode not in PAD_MODES:
        raise InvalidRateError(f"pad_mode must be one of {PAD_MODES}, got {pad_mode!r}")
    n = len(waveform)
    if n == num_samples:
        return waveform
    if n < num_samples:
        if pad_mode == "repeat":
            reps = -(-num_samples // n)  # ceil
            return np.tile(waveform, reps)[:num_samples]
        out = np.zeros(num_samples, dtype=waveform.dtype)
        out[:n] = waveform
        return out
    if train and rng is not None:
        start = int(rng.integers(0, n - num_samples + 1))
    else:
        start = 0
    return waveform[start : start + num_samples]


def transform(
    waveform,
    source_rate,
    params: TransformParams,
    rng=None,
    train=False,
):
    """Apply the full base transform chain: resample -> pad/crop -> normalize."""
    waveform = np.asarray(waveform, dtype=np.float64)
    if waveform.size == 0:
        raise EmptyWaveformError("cannot transform an empty waveform")
    if source_rate <= 0 or params.sample_rate <= 0:
        raise InvalidRateError(
            f"sample rates must be positive, got {source_rate} -> {params.sample_rate}"
        )
    if params.duration_s <= 0:
        raise InvalidRateError(f"duration_s must be positive, got {params.duration_s}")
    waveform = resample(waveform, source_rate, params.sample_rate)
    waveform = fix_length(
        waveform, params.num_samples, rng=rng, train=train, pad_mode=params.pad_mode
    )
    if params.normalize:
        peak = np.max(np.abs(waveform))
        if peak > 0:
            waveform = waveform / peak
    return waveform
