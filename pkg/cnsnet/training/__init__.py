from __future__ import annotations

from cnsnet.training.checkpoint import load_checkpoint
from cnsnet.training.checkpoint import save_checkpoint
from cnsnet.training.checkpoint import TrainState
from cnsnet.training.learning import learning_check
from cnsnet.training.optimizer import Adam
from cnsnet.training.optimizer import adam_step
from cnsnet.training.trainer import train
from cnsnet.training.trainer import Trainer

__all__ = [
    'Adam',
    'TrainState',
    'Trainer',
    'adam_step',
    'learning_check',
    'load_checkpoint',
    'save_checkpoint',
    'train',
]
