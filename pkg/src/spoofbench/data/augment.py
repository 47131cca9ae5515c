"""Stochastic training-time augmentation.

A policy is either sequential (each item applied independently with its own
probability, in order) or parallel (exactly one item selected with
probability proportional to its weight, then applied unconditionally).
Augmentations are length-preserving by contract; a plugin that changes the
length is rejected at apply time.

One reference augmentation ships: additive Gaussian noise at a configurable
SNR. The names ``rawboost``, ``rir`` and ``codec`` are conventional plugin
points and are intentionally not implemented here.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import LengthChangedError, SchemaError
from ..registry import AUGMENTATIONS, Param, ParamSchema


@dataclass(frozen=True)
class PolicyItem:
    name: str
    prob: float
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AugmentationPolicy:
    mode: str  # "sequential" | "parallel"
    items: tuple

    def __post_init__(self):
        if self.mode not in ("sequential", "parallel"):
            raise SchemaError("augment_transform.mode", f"unknown mode {self.mode!r}")
        if self.mode == "parallel" and not self.items:
            raise SchemaError("augment_transform.items", "parallel mode needs >= 1 item")
        for i, item in enumerate(self.items):
            if not 0.0 <= item.prob <= 1.0:
                raise SchemaError(
                    f"augment_transform.items[{i}].prob",
                    f"must be in [0, 1], got {item.prob}",
                )


@AUGMENTATIONS.register(
    "additive_noise",
    schema=ParamSchema(snr_db=Param(float, default=20.0)),
)
class AdditiveNoise:
    """Add white Gaussian noise at a fixed signal-to-noise ratio."""

    def __init__(self, snr_db=20.0):
        self.snr_db = float(snr_db)

    def apply(self, waveform, rng):
        rms = float(np.sqrt(np.mean(np.square(waveform))))
        if rms == 0.0:
            return waveform
        noise_rms = rms / (10.0 ** (self.snr_db / 20.0))
        return waveform + rng.normal(0.0, noise_rms, size=waveform.shape)


def build_augmentations(policy):
    """Resolve every policy item's augmentation instance once, up front."""
    if policy is None:
        return []
    return [
        AUGMENTATIONS.resolve(item.name, item.params) for item in policy.items
    ]


def apply_policy(waveform, policy, instances, rng):
    """Apply an augmentation policy with draws from ``rng``.

    Sequential mode draws one Bernoulli per item; parallel mode draws a
    single categorical over items weighted by their probabilities (all-zero
    weights select nothing). Returns a waveform of the input length.
    """
    if policy is None:
        return waveform
    if policy.mode == "sequential":
        for item, aug in zip(policy.items, instances):
            if rng.random() < item.prob:
                waveform = _checked_apply(aug, item.name, waveform, rng)
        return waveform
    weights = np.asarray([item.prob for item in policy.items], dtype=np.float64)
    total = weights.sum()
    if total == 0.0:
        return waveform
    choice = int(rng.choice(len(weights), p=weights / total))
    return _checked_apply(instances[choice], policy.items[choice].name, waveform, rng)


def _checked_apply(aug, name, waveform, rng):
    out = np.asarray(aug.apply(waveform, rng))
    if out.shape != waveform.shape:
        raise LengthChangedError(name, waveform.shape, out.shape)
    return out
