from __future__ import annotations

from collections.abc import Generator
from contextlib import contextmanager
from logging import getLogger

import numpy as np

from cnsnet.config import GridPolicy
from cnsnet.config import MaskMode
from cnsnet.config import ModelConfig
from cnsnet.core import functional as F
from cnsnet.core.errors import ShapeError
from cnsnet.core.module import check_shape
from cnsnet.core.module import Module
from cnsnet.core.module import ModuleList
from cnsnet.core.profile import count_macs
from cnsnet.core.tensor import concat
from cnsnet.core.tensor import no_grad
from cnsnet.core.tensor import Tensor
from cnsnet.masks.ops import complement
from cnsnet.masks.ops import resize_mask
from cnsnet.masks.predictor import SoftMaskPredictor
from cnsnet.network.layers import Conv2d
from cnsnet.network.saat import SAAT
from cnsnet.network.soan import SOAN

logger = getLogger(__name__)


class SoanStage(Module):
    '''
    `per_scale` SOAN blocks applied in sequence at one resolution
    '''

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        model: ModelConfig,
        rng: np.random.Generator,
        enabled: bool,
    ) -> None:
        super().__init__()
        self.blocks = ModuleList()
        cin = in_channels
        for _ in range(model.soan.per_scale):
            self.blocks.append(SOAN(cin, out_channels, model.soan, rng, enabled=enabled))
            cin = out_channels

    def forward(self, x: Tensor, mask: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x, mask)
        return x


class CNSNet(Module):
    '''
    soft-mask predictor + unet backbone with SOAN at every encoder and decoder
    scale and SAAT on the deepest features

    the backbone sees (rgb, hard mask, predicted soft mask); SOAN gets the
    nearest-resized hard mask, SAAT the bilinear-resized soft-mask complement
    '''

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        config.validate()
        self.config = config
        rng = np.random.default_rng(config.seed)
        widths = config.widths()

        self.predictor = SoftMaskPredictor(rng, config.predictor_width, config.predictor_scales)
        self.stem = Conv2d(5, widths[0], 3, rng)
        self.encoder = ModuleList()
        cin = widths[0]
        for w in widths:
            self.encoder.append(SoanStage(cin, w, config, rng, config.enable_soan))
            cin = w
        self.saat = SAAT(cin, config.grid, config.saat, rng) if config.enable_saat else None
        self.decoder = ModuleList()
        for w in reversed(widths):
            enabled = config.enable_soan and config.soan.in_decoder
            self.decoder.append(SoanStage(cin + w, w, config, rng, enabled))
            cin = w
        self.head = Conv2d(cin, 3, 3, rng)

    @property
    def divisor(self) -> int:
        return self.config.divisor

    def set_grid_policy(self, policy: GridPolicy) -> None:
        if self.saat is not None:
            self.saat.positional.policy = policy

    def _guide(self, soft: Tensor, hard: Tensor, size: tuple[int, int]) -> Tensor:
        if self.config.saat.mask_mode is MaskMode.HARD:
            return complement(resize_mask(hard, *size, mode='nearest'))
        return complement(resize_mask(soft, *size, mode='bilinear'))

    def forward(self, shadow: Tensor, hard_mask: Tensor) -> tuple[Tensor, Tensor]:
        '''
        shadow [N, 3, H, W], hard_mask [N, 1, H, W] -> (output [N, 3, H, W], soft mask [N, 1, H, W])
        '''
        check_shape('CNSNet', shadow, 4, 3)
        check_shape('CNSNet', hard_mask, 4, 1)
        h, w = shadow.shape[-2:]
        d = self.divisor
        if h % d or w % d:
            ph, pw = -h % d, -w % d
            raise ShapeError(
                'CNSNet',
                f'height and width must be multiples of {d}; pad by ({ph}, {pw}) to {h + ph}x{w + pw}',
                (shadow.shape,),
            )

        soft = self.predictor(shadow, hard_mask)
        x = F.leaky_relu(self.stem(concat([shadow, hard_mask, soft], axis=1)))

        skips: list[tuple[Tensor, Tensor]] = []
        for k, stage in enumerate(self.encoder):
            mask_k = resize_mask(hard_mask, h >> k, w >> k, mode='nearest')
            x = stage(x, mask_k)
            skips.append((x, mask_k))
            x = F.downsample2x(x)

        if self.saat is not None:
            x = self.saat(x, self._guide(soft, hard_mask, x.shape[-2:]))

        for stage, (skip, mask_k) in zip(self.decoder, reversed(skips)):
            x = concat([F.upsample2x(x), skip], axis=1)
            x = stage(x, mask_k)

        return F.sigmoid(self.head(x)), soft

    def backbone_parameter_count(self) -> int:
        return self.param_count() - self.predictor.param_count()

    def complexity(self, height: int, width: int) -> tuple[int, int]:
        '''
        (trainable parameters, multiply-accumulates of one forward pass)
        '''
        shadow = Tensor(np.zeros((1, 3, height, width)))
        mask = Tensor(np.zeros((1, 1, height, width)))
        training = self.training
        self.eval()
        try:
            with no_grad(), grid_policy(self, GridPolicy.INTERPOLATE), count_macs() as counter:
                self(shadow, mask)
        finally:
            self.train(training)
        return self.param_count(), counter.total


@contextmanager
def grid_policy(model: CNSNet, policy: GridPolicy) -> Generator[None, None, None]:
    previous = model.config.saat.grid_policy if model.saat is None else model.saat.positional.policy
    model.set_grid_policy(policy)
    try:
        yield
    finally:
        model.set_grid_policy(previous)


def param_count(module: Module) -> int:
    return module.param_count()


def pad_to_multiple(image: np.ndarray, divisor: int) -> tuple[np.ndarray, tuple[int, int]]:
    '''
    reflect-pad the last two axes up to a multiple of divisor, returns the original size
    '''
    h, w = image.shape[-2:]
    ph, pw = -h % divisor, -w % divisor
    if not ph and not pw:
        return image, (h, w)
    pad = [(0, 0)] * (image.ndim - 2) + [(0, ph), (0, pw)]
    mode = 'reflect' if ph < h and pw < w else 'edge'
    return np.pad(image, pad, mode=mode), (h, w)


def remove_shadow(model: CNSNet, shadow: np.ndarray, hard_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    '''
    single image inference: [3, H, W], [H, W] -> (output [3, H, W], soft mask [H, W]),
    any size, padded and cropped around the divisibility contract
    '''
    padded, (h, w) = pad_to_multiple(np.asarray(shadow), model.divisor)
    padded_mask, _ = pad_to_multiple(np.asarray(hard_mask), model.divisor)
    ph, pw = padded.shape[-2:]
    with no_grad():
        out, soft = model(
            Tensor(padded.reshape(1, 3, ph, pw)),
            Tensor((padded_mask > 0.5).reshape(1, 1, ph, pw)),
        )
    return out.numpy()[0, :, :h, :w], soft.numpy()[0, 0, :h, :w]


__all__ = [
    'CNSNet',
    'SoanStage',
    'grid_policy',
    'pad_to_multiple',
    'param_count',
    'remove_shadow',
]
