from __future__ import annotations

import logging
import os
from collections.abc import Generator
from contextlib import contextmanager
from logging import getLogger

import numpy as np

from cnsnet.config import Config

logger = getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


@contextmanager
def float_traps() -> Generator[None, None, None]:
    '''
    raise on overflow, invalid and divide-by-zero; numpy keeps this per thread
    '''
    with np.errstate(over='raise', invalid='raise', divide='raise', under='ignore'):
        yield


@contextmanager
def runtime(config: Config) -> Generator[None, None, None]:
    '''
    process-wide setup for one cli run: logging and floating point traps
    '''
    logging.basicConfig(level=config.log_level.upper(), format=LOG_FORMAT, force=True)
    threads = os.environ.get('OMP_NUM_THREADS')
    if threads != '1':
        logger.debug('OMP_NUM_THREADS=%s, bit-identical reruns need a single thread', threads)
    with float_traps():
        yield


__all__ = [
    'float_traps',
    'runtime',
]
