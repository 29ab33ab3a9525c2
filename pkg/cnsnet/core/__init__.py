from __future__ import annotations

from cnsnet.core.errors import CNSNetError
from cnsnet.core.errors import ShapeError
from cnsnet.core.module import Module
from cnsnet.core.module import ModuleList
from cnsnet.core.module import Parameter
from cnsnet.core.tensor import default_dtype
from cnsnet.core.tensor import GradTape
from cnsnet.core.tensor import no_grad
from cnsnet.core.tensor import Tensor

__all__ = [
    'CNSNetError',
    'GradTape',
    'Module',
    'ModuleList',
    'Parameter',
    'ShapeError',
    'Tensor',
    'default_dtype',
    'no_grad',
]
