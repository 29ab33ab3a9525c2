from __future__ import annotations

import os
from logging import getLogger

from cnsnet.config import Config
from cnsnet.training.trainer import train as run_training

logger = getLogger(__name__)


def train(config: Config, out: str | os.PathLike[str], resume: str | os.PathLike[str] | None = None) -> int:
    result = run_training(config, out, resume)
    if not result.history.empty:
        tail = result.history.tail(min(len(result.history), config.train.log_every))
        print(tail[['rem', 'soft', 'per', 'grad', 'total']].mean().to_string())
    logger.info('finished: best validation shadow rmse %.4f, last checkpoint %s', result.best_val, result.last)
    return 0


__all__ = [
    'train',
]
