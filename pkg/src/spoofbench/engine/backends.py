"""Back-end classifiers: aggregated features -> (embedding, logits).

Two built-ins ship, a temporal-mean-pool MLP and a statistics-pooling
linear head. The published architectures (aasist, ecapa_tdnn, rawnet2,
nes2net, tcm, bicrossmamba_st) are reserved plugin names.
"""

import torch
from torch import nn

from ..errors import ParamValidationError
from ..registry import BACKENDS, Param, ParamSchema

RESERVED_BACKENDS = (
    "aasist", "ecapa_tdnn", "rawnet2", "nes2net", "tcm", "bicrossmamba_st",
)

NUM_CLASSES = 2  # spoof / bonafide


class BaseBackEnd(nn.Module):
    """Interface: forward [b, T, D] -> (embedding [b, E], logits [b, 2])."""

    embedding_dim: int


@BACKENDS.register(
    "mlp",
    schema=ParamSchema(hidden=Param(list, default=[128, 64], elem=int)),
)
class MLPBackend(BaseBackEnd):
    """Temporal mean pooling followed by a fully connected stack.

    With ``hidden=[]`` the embedding is the pooled features themselves and
    only the linear classification head remains.
    """

    def __init__(self, input_dim, hidden=(128, 64)):
        super().__init__()
        layers = []
        dim = input_dim
        for width in hidden:
            layers += [nn.Linear(dim, width), nn.ReLU()]
            dim = width
        self.stack = nn.Sequential(*layers)
        self.embedding_dim = dim
        self.head = nn.Linear(dim, NUM_CLASSES)

    def forward(self, features):
        pooled = features.mean(dim=1)  # [b, D]
        embedding = self.stack(pooled)
        return embedding, self.head(embedding)


@BACKENDS.register(
    "pool",
    schema=ParamSchema(stats=Param(str, default="mean")),
)
class PoolBackend(BaseBackEnd):
    """Statistics pooling over time plus a single linear head.

    ``stats`` is "mean" or "mean+std"; the std term uses the population
    estimator so single-frame inputs yield an exact zero vector.
    """

    def __init__(self, input_dim, stats="mean"):
        super().__init__()
        if stats not in ("mean", "mean+std"):
            raise ParamValidationError("stats", f'must be "mean" or "mean+std", got {stats!r}')
        self.stats = stats
        self.embedding_dim = input_dim * (2 if stats == "mean+std" else 1)
        self.head = nn.Linear(self.embedding_dim, NUM_CLASSES)

    def forward(self, features):
        mean = features.mean(dim=1)
        if self.stats == "mean+std":
            var = features.var(dim=1, correction=0)
            embedding = torch.cat([mean, var.sqrt()], dim=1)
        else:
            embedding = mean
        return embedding, self.head(embedding)
