from __future__ import annotations

import json
import math
import os
from dataclasses import asdict
from dataclasses import dataclass
from logging import getLogger
from pathlib import Path

import numpy as np

from cnsnet.config import Config
from cnsnet.config import dump_config
from cnsnet.config import parse_config
from cnsnet.core.archive import load_archive
from cnsnet.core.archive import save_archive
from cnsnet.core.errors import CheckpointMismatch
from cnsnet.network.model import CNSNet
from cnsnet.training.optimizer import AdamState

logger = getLogger(__name__)

FORMAT = 'cnsnet-checkpoint'


@dataclass
class TrainState:
    step: int = 0
    epoch: int = 0
    seed: int = 0
    lr: float = 1e-3
    best_val: float = math.inf
    plateau_best: float = math.inf
    plateau_bad: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> TrainState:
        try:
            return cls(**json.loads(text))
        except (TypeError, json.JSONDecodeError) as e:
            raise CheckpointMismatch(f'unreadable train state: {e}') from e


@dataclass
class Checkpoint:
    config: Config
    model: dict[str, np.ndarray]
    optimizer: AdamState
    state: TrainState

    def build_model(self) -> CNSNet:
        model = CNSNet(self.config.model)
        model.load_state_dict(self.model)
        return model


def save_checkpoint(
    path: str | os.PathLike[str],
    config: Config,
    model: CNSNet,
    optimizer: AdamState,
    state: TrainState,
) -> Path:
    tensors = {f'model.{k}': v for k, v in model.state_dict().items()}
    tensors.update(optimizer.tensors())
    metadata = {
        'format': FORMAT,
        'config': dump_config(config),
        'train_state': state.to_json(),
        'adam_step': str(optimizer.step),
    }
    return save_archive(path, tensors, metadata)


def load_checkpoint(path: str | os.PathLike[str], config: Config | None = None) -> Checkpoint:
    '''
    read a checkpoint; when a config is given its model section has to match
    the one the checkpoint was trained with
    '''
    archive = load_archive(path)
    if archive.metadata.get('format') != FORMAT:
        raise CheckpointMismatch(f'{path} is not a training checkpoint')
    stored = parse_config(archive.metadata['config'])
    if config is not None and config.model != stored.model:
        raise CheckpointMismatch(f'{path} was trained with a different model configuration')

    model = {k.removeprefix('model.'): v for k, v in archive.tensors.items() if k.startswith('model.')}
    moments = {k: v for k, v in archive.tensors.items() if k.startswith('adam.')}
    optimizer = AdamState.from_tensors(int(archive.metadata.get('adam_step', 0)), moments)
    state = TrainState.from_json(archive.metadata['train_state'])
    logger.info('loaded checkpoint %s (step %d, epoch %d)', path, state.step, state.epoch)
    return Checkpoint(stored, model, optimizer, state)


__all__ = [
    'Checkpoint',
    'TrainState',
    'load_checkpoint',
    'save_checkpoint',
]
