"""spoofbench: configuration-driven training and evaluation of audio
deepfake detectors, with plugin registries, a reproducible trainer, and an
EER / group-fairness evaluation suite."""

from . import components  # noqa: F401  (registers built-in components)
from . import errors, registry  # noqa: F401

__version__ = "0.1.0"
