"""Combining per-layer front-end features into a single sequence.

Three methods: take the last layer, a learnable softmax-weighted sum over
layers, or attentive weighting where each layer's scalar score comes from a
small tanh bottleneck over its time-pooled features.
"""

import torch
from torch import nn

from ..errors import SchemaError

METHODS = ("last", "weighted_sum", "attentive")


class LayerAggregation(nn.Module):
    def __init__(self, method, layer_count, feature_dim, attn_dim=32):
        super().__init__()
        if method not in METHODS:
            raise SchemaError(
                "model.frontend.aggregation", f"must be one of {METHODS}, got {method!r}"
            )
        self.method = method
        self.layer_count = layer_count
        if method == "weighted_sum":
            self.layer_logits = nn.Parameter(torch.zeros(layer_count))
        elif method == "attentive":
            self.attn_proj = nn.Linear(feature_dim, attn_dim)
            self.attn_vec = nn.Parameter(torch.randn(attn_dim) * 0.1)

    def layer_weights(self, features=None):
        """Current mixing weights: [L] (or [L, b] for attentive).

        Always a probability vector over layers; for ``last`` this is the
        one-hot selection of the final layer.
        """
        if self.method == "last":
            w = torch.zeros(self.layer_count)
            w[-1] = 1.0
            return w
        if self.method == "weighted_sum":
            return torch.softmax(self.layer_logits, dim=0)
        if features is None:
            raise ValueError("attentive weights depend on the input features")
        scores = self._attention_scores(features)
        return torch.softmax(scores, dim=0)

    def _attention_scores(self, features):
        pooled = features.mean(dim=2)  # [L, b, D]
        return torch.tanh(self.attn_proj(pooled)) @ self.attn_vec  # [L, b]

    def forward(self, features):
        if features.shape[0] != self.layer_count:
            raise SchemaError(
                "aggregation",
                f"expected {self.layer_count} layers, got {features.shape[0]}",
            )
        if self.method == "last":
            return features[-1]
        if self.method == "weighted_sum":
            weights = torch.softmax(self.layer_logits, dim=0).to(features.dtype)
            return torch.einsum("l,lbtd->btd", weights, features)
        weights = torch.softmax(self._attention_scores(features), dim=0)  # [L, b]
        return (weights[:, :, None, None] * features).sum(dim=0)
