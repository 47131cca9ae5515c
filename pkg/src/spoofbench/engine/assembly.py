"""Composing frontend -> aggregation -> backend -> loss into one model."""

import torch
from torch import nn

from ..errors import SpoofbenchError
from ..registry import BACKENDS, FRONTENDS, LOSSES
from .aggregation import LayerAggregation


class ModelAssembly(nn.Module):
    """The full detection model; parameters are namespaced by component.

    ``forward`` needs labels and returns (loss, scores); ``score`` runs the
    label-free path. Scores always orient larger = more bonafide.
    """

    def __init__(self, frontend, aggregation, backend, loss):
        super().__init__()
        self.frontend = frontend
        self.aggregation = aggregation
        self.backend = backend
        self.loss = loss

    def _dtype(self):
        return next(self.parameters()).dtype

    def _features(self, waveforms):
        waves = torch.as_tensor(waveforms, dtype=self._dtype())
        if waves.ndim != 2:
            raise SpoofbenchError(
                f"frontend input must be [batch, samples], got shape {tuple(waves.shape)}"
            )
        features = self.frontend(waves)
        if features.ndim != 4:
            raise SpoofbenchError(
                f"frontend {type(self.frontend).__name__} must return [L, b, T, D], "
                f"got shape {tuple(features.shape)}"
            )
        return self.backend(self.aggregation(features))

    def forward(self, waveforms, labels):
        outputs = self._features(waveforms)
        labels = torch.as_tensor(labels, dtype=torch.long)
        return self.loss(outputs, labels)

    def score(self, waveforms):
        return self.loss.score(self._features(waveforms))

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]


def build_assembly(frontend_cfg, backend_cfg, loss_cfg):
    """Instantiate all components from validated config sections."""
    frontend = FRONTENDS.resolve(
        frontend_cfg["type"], frontend_cfg.get("params"), frontend_cfg.get("mode", "finetune")
    )
    aggregation = LayerAggregation(
        frontend_cfg.get("aggregation", "last"),
        frontend.layer_count,
        frontend.feature_dim,
    )
    backend = BACKENDS.resolve(
        backend_cfg["type"], backend_cfg.get("params"), frontend.feature_dim
    )
    loss = LOSSES.resolve(loss_cfg["type"], loss_cfg.get("params"), backend.embedding_dim)
    return ModelAssembly(frontend, aggregation, backend, loss)
