from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import TypeVar

import numpy as np

from cnsnet.config import LossWeights
from cnsnet.core import functional as F
from cnsnet.core.errors import ShapeError
from cnsnet.core.module import Module
from cnsnet.core.tensor import absolute
from cnsnet.core.tensor import mean
from cnsnet.core.tensor import sqrt
from cnsnet.core.tensor import Tensor
from cnsnet.masks.ops import dilate
from cnsnet.masks.ops import soft_mask_loss
from cnsnet.network.perceptual import PerceptualExtractor
from cnsnet.network.perceptual import STAGE_WEIGHTS

T = TypeVar('T', Tensor, float)


def _constant(value: Tensor | np.ndarray, like: Tensor) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value, dtype=like.dtype.type)


def loss_rem(output: Tensor, gt: Tensor | np.ndarray) -> Tensor:
    '''
    pixel-wise l1
    '''
    target = _constant(gt, output)
    if target.shape != output.shape:
        raise ShapeError('loss_rem', 'output and ground truth differ', (output.shape, target.shape))
    return mean(absolute(output - target))


def rms(x: Tensor) -> Tensor:
    return sqrt(mean(x * x))


def loss_per(
    output: Tensor,
    gt: Tensor | np.ndarray,
    extractor: PerceptualExtractor,
    weights: Sequence[float] = STAGE_WEIGHTS,
) -> Tensor:
    '''
    weighted sum over stages of the rms of the feature difference
    '''
    ours = extractor(output)
    theirs = extractor(_constant(gt, output))
    total: Tensor | None = None
    for w, a, b in zip(weights, ours, theirs):
        term = rms(a - b) * w
        total = term if total is None else total + term
    assert total is not None
    return total


def loss_grad(
    output: Tensor,
    shadow: Tensor | np.ndarray,
    gt: Tensor | np.ndarray,
    hard_mask: np.ndarray,
    dilation: int = 7,
) -> Tensor:
    '''
    laplacian matching: outside the dilated shadow the output follows the input,
    inside it follows the ground truth; per-pixel channel-mean squared errors,
    averaged over all pixels
    '''
    n, _, h, w = output.shape
    m = np.asarray(hard_mask, dtype=output.dtype)
    if m.shape == (h, w):
        m = np.broadcast_to(m, (n, 1, h, w))
    if m.shape != (n, 1, h, w):
        raise ShapeError('loss_grad', 'mask must be [H, W] or [N, 1, H, W]', (output.shape, m.shape))
    band = dilate(m, dilation).astype(output.dtype)

    lap_out = F.laplacian(output)
    lap_in = F.laplacian(_constant(shadow, output).detach())
    lap_gt = F.laplacian(_constant(gt, output).detach())
    to_input = mean((lap_out - lap_in) * (lap_out - lap_in), axis=1, keepdims=True)
    to_gt = mean((lap_out - lap_gt) * (lap_out - lap_gt), axis=1, keepdims=True)
    inside = Tensor(band, dtype=output.dtype.type)
    outside = Tensor(1 - band, dtype=output.dtype.type)
    return mean(to_input * outside + to_gt * inside)


def loss_total(parts: Sequence[T], weights: LossWeights) -> T:
    '''
    weighted sum of (rem, soft, per, grad)
    '''
    if len(parts) != 4:
        raise ValueError(f'expected 4 loss parts, got {len(parts)}')
    total = parts[0] * weights.rem
    total = total + parts[1] * weights.soft
    total = total + parts[2] * weights.per
    total = total + parts[3] * weights.grad
    return total


@dataclass(frozen=True)
class LossParts:
    rem: Tensor
    soft: Tensor
    per: Tensor
    grad: Tensor
    total: Tensor

    def as_floats(self) -> dict[str, float]:
        return {
            'rem': self.rem.item(),
            'soft': self.soft.item(),
            'per': self.per.item(),
            'grad': self.grad.item(),
            'total': self.total.item(),
        }


class RemovalLoss(Module):
    '''
    the four-term training objective, owns the frozen perceptual extractor
    '''

    def __init__(self, weights: LossWeights, seed: int = 0) -> None:
        super().__init__()
        self.weights = weights
        self.extractor = PerceptualExtractor(seed)

    def forward(
        self,
        output: Tensor,
        soft_pred: Tensor,
        shadow: np.ndarray,
        gt: np.ndarray,
        hard_mask: np.ndarray,
        soft_target: np.ndarray,
    ) -> LossParts:
        parts = (
            loss_rem(output, gt),
            soft_mask_loss(soft_pred, soft_target),
            loss_per(output, gt, self.extractor),
            loss_grad(output, shadow, gt, hard_mask, self.weights.dilation),
        )
        return LossParts(*parts, total=loss_total(parts, self.weights))


__all__ = [
    'LossParts',
    'RemovalLoss',
    'loss_grad',
    'loss_per',
    'loss_rem',
    'loss_total',
    'rms',
]
