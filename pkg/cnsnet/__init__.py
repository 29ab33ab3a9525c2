'''
shadow removal with shadow-oriented adaptive normalization and
shadow-aware aggregation, on a small numpy autodiff engine
'''
from __future__ import annotations

from cnsnet.config import Config
from cnsnet.config import ModelConfig
from cnsnet.network.model import CNSNet
from cnsnet.network.model import remove_shadow

__all__ = [
    'CNSNet',
    'Config',
    'ModelConfig',
    'remove_shadow',
]
