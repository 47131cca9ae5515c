"""Front-end feature extractors.

A front-end maps raw waveforms [b, samples] to a stack of per-layer feature
sequences [L, b, T, D]. Published SSL extractors (wav2vec2, wavlm, hubert,
eat, mert, whisper, beats) are plugin points: register a wrapper exposing
the same interface. The built-in ``reference`` front-end is a small strided
convolutional encoder whose four tap points stand in for SSL layer stacks
at desk scale.
"""

import torch
from torch import nn

from ..errors import SchemaError
from ..registry import FRONTENDS, Param, ParamSchema

MODES = ("frozen", "finetune")

# Known published front-ends; names reserved for plugins, not shipped here.
RESERVED_FRONTENDS = ("wav2vec2", "wavlm", "hubert", "eat", "mert", "whisper", "beats")


class BaseFrontEnd(nn.Module):
    """Interface: ``forward`` [b, n] -> [L, b, T, D], plus layer/dim metadata."""

    layer_count: int
    feature_dim: int
    mode: str

    def __init__(self, mode="finetune"):
        super().__init__()
        if mode not in MODES:
            raise SchemaError("model.frontend.mode", f"must be one of {MODES}, got {mode!r}")
        self.mode = mode

    def apply_mode(self):
        """Freeze parameters when configured frozen; call after building."""
        if self.mode == "frozen":
            for p in self.parameters():
                p.requires_grad_(False)


@FRONTENDS.register(
    "reference",
    schema=ParamSchema(
        feature_dim=Param(int, default=64),
        stem_kernel=Param(int, default=400),
        stem_stride=Param(int, default=320),
    ),
)
class ConvFrontEnd(BaseFrontEnd):
    """Strided conv stem followed by four stride-1 conv blocks.

    Each block output is one tapped layer, so L = 4 and every layer shares
    T = samples / stem_stride (exact when samples divides the stride) and
    D = feature_dim. Under 10^5 parameters at the defaults.
    """

    layer_count = 4

    def __init__(self, mode="finetune", feature_dim=64, stem_kernel=400, stem_stride=320):
        super().__init__(mode=mode)
        self.feature_dim = feature_dim
        pad = max(0, (stem_kernel - stem_stride) // 2)
        self.stem = nn.Conv1d(1, feature_dim, stem_kernel, stride=stem_stride, padding=pad)
        self.blocks = nn.ModuleList(
            nn.Conv1d(feature_dim, feature_dim, 3, padding=1)
            for _ in range(self.layer_count)
        )
        self.act = nn.GELU()
        self.apply_mode()

    def forward(self, waveforms):
        x = self.act(self.stem(waveforms.unsqueeze(1)))  # [b, D, T]
        taps = []
        for block in self.blocks:
            x = self.act(block(x))
            taps.append(x.transpose(1, 2))  # [b, T, D]
        return torch.stack(taps, dim=0)  # [L, b, T, D]
