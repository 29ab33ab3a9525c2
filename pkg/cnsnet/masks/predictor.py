from __future__ import annotations

import numpy as np

from cnsnet.core import functional as F
from cnsnet.core.errors import ShapeError
from cnsnet.core.module import check_shape
from cnsnet.core.module import Module
from cnsnet.core.module import ModuleList
from cnsnet.core.tensor import concat
from cnsnet.core.tensor import Tensor
from cnsnet.network.layers import Conv2d
from cnsnet.network.layers import ConvBlock


class SoftMaskPredictor(Module):
    '''
    small unet from (rgb, hard mask) to a soft shadow mask in [0, 1]

    `scales` down and up steps, widths double per scale from `width`,
    skip connections by concatenation, sigmoid head
    '''

    def __init__(self, rng: np.random.Generator, width: int = 16, scales: int = 3) -> None:
        super().__init__()
        self.scales = scales
        widths = [width * 2**k for k in range(scales)]
        self.down = ModuleList()
        cin = 4
        for w in widths:
            self.down.append(ConvBlock(cin, w, rng))
            cin = w
        self.bottom = ConvBlock(cin, cin, rng)
        self.up = ModuleList()
        for w in reversed(widths):
            self.up.append(ConvBlock(cin + w, w, rng))
            cin = w
        self.head = Conv2d(cin, 1, 1, rng)

    def forward(self, shadow: Tensor, hard_mask: Tensor) -> Tensor:
        check_shape('SoftMaskPredictor', shadow, 4, 3)
        check_shape('SoftMaskPredictor', hard_mask, 4, 1)
        h, w = shadow.shape[-2:]
        if h % 2**self.scales or w % 2**self.scales:
            raise ShapeError('SoftMaskPredictor', f'size must be a multiple of {2**self.scales}', (shadow.shape,))
        x = concat([shadow, hard_mask], axis=1)
        skips = []
        for block in self.down:
            x = block(x)
            skips.append(x)
            x = F.downsample2x(x)
        x = self.bottom(x)
        for block, skip in zip(self.up, reversed(skips)):
            x = block(concat([F.upsample2x(x), skip], axis=1))
        return F.sigmoid(self.head(x))


def predict_soft_mask(predictor: SoftMaskPredictor, shadow: Tensor, hard_mask: Tensor) -> Tensor:
    '''
    [3, H, W] / [H, W] inputs give [H, W], batched inputs pass through
    '''
    if shadow.ndim == 3:
        h, w = shadow.shape[-2:]
        out = predictor(shadow.reshape(1, 3, h, w), hard_mask.reshape(1, 1, h, w))
        return out.reshape(h, w)
    return predictor(shadow, hard_mask)


__all__ = [
    'SoftMaskPredictor',
    'predict_soft_mask',
]
