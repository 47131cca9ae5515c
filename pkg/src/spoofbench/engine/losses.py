"""Training losses and their detection-score heads.

Every loss consumes the back-end output pair (embedding, logits) and
returns (scalar loss, per-utterance scores) with a uniform orientation:
larger score means more bonafide. ``score`` extracts scores without
labels, which is what label-free evaluation uses.

Margin losses operate on unit-normalized embeddings; a zero-norm embedding
is a degenerate state and raises instead of being epsilon-masked.
"""

import math

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import NumericError, ParamValidationError
from ..registry import LOSSES, Param, ParamSchema

BONAFIDE = 1


class BaseLoss(nn.Module):
    def forward(self, outputs, labels):
        raise NotImplementedError

    def score(self, outputs):
        raise NotImplementedError


def _unit(x, what):
    norms = x.norm(dim=-1, keepdim=True)
    if bool((norms == 0).any()):
        raise NumericError(f"zero-norm {what}: cosine normalization is degenerate")
    return x / norms


@LOSSES.register("ce", schema=ParamSchema())
class CrossEntropy(BaseLoss):
    """Mean negative log-softmax of the true class over two logits.

    Score is the bonafide-class log-softmax value.
    """

    def __init__(self, embedding_dim=None):
        super().__init__()

    def forward(self, outputs, labels):
        _, logits = outputs
        log_probs = F.log_softmax(logits, dim=1)
        loss = -log_probs[torch.arange(len(labels)), labels].mean()
        return loss, log_probs[:, BONAFIDE]

    def score(self, outputs):
        _, logits = outputs
        return F.log_softmax(logits, dim=1)[:, BONAFIDE]


@LOSSES.register(
    "ocsoftmax",
    schema=ParamSchema(
        alpha=Param(float, default=20.0),
        m_real=Param(float, default=0.9),
        m_fake=Param(float, default=0.2),
    ),
)
class OCSoftmax(BaseLoss):
    """One-class margin loss around a learnable direction.

    With unit center w and unit embeddings x, the per-item term is
    softplus(alpha * (m_real - w.x)) for bonafide and
    softplus(alpha * (w.x - m_fake)) for spoof, pushing bonafide cosines
    above m_real and spoof cosines below m_fake. Score is the cosine w.x.
    """

    def __init__(self, embedding_dim, alpha=20.0, m_real=0.9, m_fake=0.2):
        super().__init__()
        if alpha <= 0:
            raise ParamValidationError("alpha", f"must be > 0, got {alpha}")
        if not (-1.0 < m_fake < m_real < 1.0):
            raise ParamValidationError(
                "m_real/m_fake", f"need -1 < m_fake < m_real < 1, got {m_fake}, {m_real}"
            )
        self.alpha = alpha
        self.m_real = m_real
        self.m_fake = m_fake
        self.center = nn.Parameter(torch.randn(embedding_dim))

    def _cosine(self, embedding):
        return _unit(embedding, "embedding") @ _unit(self.center, "center")

    def forward(self, outputs, labels):
        embedding, _ = outputs
        cos = self._cosine(embedding)
        bona = labels == BONAFIDE
        margins = torch.where(bona, cos.new_tensor(self.m_real), cos.new_tensor(self.m_fake))
        sign = torch.where(bona, cos.new_tensor(1.0), cos.new_tensor(-1.0))
        loss = F.softplus(self.alpha * sign * (margins - cos)).mean()
        return loss, cos

    def score(self, outputs):
        embedding, _ = outputs
        return self._cosine(embedding)


class _CosineMarginBase(BaseLoss):
    """Shared machinery: class-direction matrix, cosines, margin-free score."""

    def __init__(self, embedding_dim, num_classes=2):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(embedding_dim, num_classes))

    def cosines(self, embedding):
        return _unit(embedding, "embedding") @ _unit(self.weight.t(), "class weight").t()

    def score(self, outputs):
        embedding, _ = outputs
        return self.cosines(embedding)[:, BONAFIDE]


@LOSSES.register(
    "amsoftmax",
    schema=ParamSchema(s=Param(float, default=30.0), m=Param(float, default=0.35)),
)
class AMSoftmax(_CosineMarginBase):
    """Additive cosine margin: cross-entropy over s*(cos - m) at the target."""

    def __init__(self, embedding_dim, s=30.0, m=0.35):
        if s <= 0:
            raise ParamValidationError("s", f"must be > 0, got {s}")
        if m < 0:
            raise ParamValidationError("m", f"must be >= 0, got {m}")
        super().__init__(embedding_dim)
        self.s = s
        self.m = m

    def forward(self, outputs, labels):
        embedding, _ = outputs
        cos = self.cosines(embedding)
        margin = F.one_hot(labels, cos.shape[1]).to(cos.dtype) * self.m
        loss = F.cross_entropy(self.s * (cos - margin), labels)
        return loss, cos[:, BONAFIDE]


@LOSSES.register(
    "asoftmax",
    schema=ParamSchema(s=Param(float, default=30.0), m=Param(int, default=4)),
)
class ASoftmax(_CosineMarginBase):
    """Multiplicative angular margin via psi(theta) = (-1)^k cos(m theta) - 2k.

    The piecewise construction keeps psi monotonically decreasing over
    [0, pi]; m = 1 collapses to plain normalized softmax.
    """

    _ACOS_CLAMP = 1e-7

    def __init__(self, embedding_dim, s=30.0, m=4):
        if s <= 0:
            raise ParamValidationError("s", f"must be > 0, got {s}")
        if not isinstance(m, int) or m < 1:
            raise ParamValidationError("m", f"must be an integer >= 1, got {m!r}")
        super().__init__(embedding_dim)
        self.s = s
        self.m = m

    def forward(self, outputs, labels):
        embedding, _ = outputs
        cos = self.cosines(embedding)
        target_cos = cos[torch.arange(len(labels)), labels]
        theta = torch.acos(target_cos.clamp(-1 + self._ACOS_CLAMP, 1 - self._ACOS_CLAMP))
        k = torch.floor(self.m * theta / math.pi)
        parity = 1.0 - 2.0 * (k % 2)  # (-1)^k without a negative-base pow
        psi = parity * torch.cos(self.m * theta) - 2.0 * k
        logits = self.s * cos
        logits = logits.scatter(
            1, labels.unsqueeze(1), (self.s * psi).unsqueeze(1)
        )
        loss = F.cross_entropy(logits, labels)
        return loss, cos[:, BONAFIDE]
