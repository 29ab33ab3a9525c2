from __future__ import annotations

import os
from logging import getLogger

from cnsnet.config import Config
from cnsnet.data.dataset import materialize
from cnsnet.data.dataset import SyntheticDataset

logger = getLogger(__name__)


def synth(config: Config, out: str | os.PathLike[str], count: int, split: str = 'train') -> int:
    '''
    write `count` synthetic triplets in the ISTD folder layout
    '''
    stream = 'train' if split == 'train' else 'test'
    dataset = SyntheticDataset(config.synth, count, config.seed, stream)
    materialize(dataset, out, split)
    return 0


__all__ = [
    'synth',
]
