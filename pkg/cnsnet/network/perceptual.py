from __future__ import annotations

import os
from logging import getLogger

import numpy as np

from cnsnet.core import functional as F
from cnsnet.core.archive import load_archive
from cnsnet.core.errors import CheckpointMismatch
from cnsnet.core.module import Module
from cnsnet.core.module import ModuleList
from cnsnet.core.tensor import Tensor
from cnsnet.network.layers import Conv2d

logger = getLogger(__name__)

STAGE_WEIGHTS = (1 / 32, 1 / 16, 1 / 8, 1 / 4, 1.0)
STAGE_CHANNELS = (16, 32, 64, 64, 64)


class PerceptualExtractor(Module):
    '''
    frozen 5-stage conv pyramid, seeded random weights unless real stage
    weights are loaded; stage k runs at 1/2^(k-1) resolution
    '''

    def __init__(self, seed: int = 0, channels: tuple[int, ...] = STAGE_CHANNELS) -> None:
        super().__init__()
        rng = np.random.default_rng(seed)
        self.stages = ModuleList()
        cin = 3
        for cout in channels:
            self.stages.append(Conv2d(cin, cout, 3, rng))
            cin = cout
        self.freeze()

    def load_stage_weights(self, path: str | os.PathLike[str]) -> None:
        '''
        read `stage{k}.weight` / `stage{k}.bias` (k from 1) out of a tensor archive
        '''
        archive = load_archive(path)
        state = {}
        for k, stage in enumerate(self.stages, start=1):
            for name in ('weight', 'bias'):
                key = f'stage{k}.{name}'
                if key not in archive.tensors:
                    raise CheckpointMismatch('perceptual weights incomplete', missing=[key])
                state[f'stages.{k - 1}.{name}'] = archive.tensors[key]
        self.load_state_dict(state)
        self.freeze()
        logger.info('loaded perceptual stage weights from %s', path)

    def forward(self, x: Tensor) -> list[Tensor]:
        features = []
        for k, stage in enumerate(self.stages):
            if k:
                x = F.downsample2x(x)
            x = F.leaky_relu(stage(x))
            features.append(x)
        return features


__all__ = [
    'PerceptualExtractor',
    'STAGE_CHANNELS',
    'STAGE_WEIGHTS',
]
