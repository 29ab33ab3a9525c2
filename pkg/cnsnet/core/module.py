from __future__ import annotations

import math
from abc import ABCMeta
from abc import abstractmethod
from collections.abc import Iterator
from collections.abc import Mapping
from collections.abc import Sequence
from logging import getLogger
from typing import Any

import numpy as np

from cnsnet.core.errors import CheckpointMismatch
from cnsnet.core.errors import ShapeError
from cnsnet.core.functional import LEAKY_SLOPE
from cnsnet.core.tensor import get_default_dtype
from cnsnet.core.tensor import Tensor

logger = getLogger(__name__)


class Parameter(Tensor):
    '''
    a trainable leaf tensor, owned by a module
    '''

    def __init__(self, data: Any, dtype: type[np.floating] | None = None) -> None:
        super().__init__(data, requires_grad=True, dtype=dtype)

    def requires_grad_(self, flag: bool) -> Parameter:
        self._requires_grad = flag
        if not flag:
            self._grad = None
        return self


def kaiming_uniform(
    shape: Sequence[int],
    fan_in: int,
    rng: np.random.Generator,
    slope: float = LEAKY_SLOPE,
) -> np.ndarray:
    gain = math.sqrt(2.0 / (1.0 + slope**2))
    bound = gain * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=tuple(shape)).astype(get_default_dtype())


class Module(metaclass=ABCMeta):
    '''
    container of parameters, buffers and child modules

    attributes are registered by type on assignment, names follow
    assignment order so state dicts are ordered deterministically
    '''

    _parameters: dict[str, Parameter]
    _buffers: dict[str, np.ndarray]
    _modules: dict[str, Module]
    _training: bool

    def __init__(self) -> None:
        object.__setattr__(self, '_parameters', {})
        object.__setattr__(self, '_buffers', {})
        object.__setattr__(self, '_modules', {})
        object.__setattr__(self, '_training', True)

    def __setattr__(self, name: str, value: Any) -> None:
        if not hasattr(self, '_parameters'):
            raise RuntimeError(f'{type(self).__name__}.__init__ must call super().__init__()')
        for registry in (self._parameters, self._modules, self._buffers):
            registry.pop(name, None)
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        '''
        non-trainable state that still travels with the checkpoint
        '''
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        if name not in self._buffers:
            raise KeyError(name)
        self.register_buffer(name, value)

    @abstractmethod
    def forward(self, *args: Any, **kwargs: Any) -> Any:
        ...

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    # traversal

    def named_children(self) -> Iterator[tuple[str, Module]]:
        yield from self._modules.items()

    def named_parameters(self, prefix: str = '') -> Iterator[tuple[str, Parameter]]:
        for name, p in self._parameters.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(f'{prefix}{name}.')

    def named_buffers(self, prefix: str = '') -> Iterator[tuple[str, np.ndarray]]:
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, m in self._modules.items():
            yield from m.named_buffers(f'{prefix}{name}.')

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self) -> list[Parameter]:
        return [p for p in self.parameters() if p.requires_grad]

    def modules(self) -> Iterator[Module]:
        yield self
        for m in self._modules.values():
            yield from m.modules()

    # modes

    @property
    def training(self) -> bool:
        return self._training

    def train(self, mode: bool = True) -> Module:
        for m in self.modules():
            object.__setattr__(m, '_training', mode)
        return self

    def eval(self) -> Module:
        return self.train(False)

    def freeze(self) -> Module:
        for p in self.parameters():
            p.requires_grad_(False)
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def param_count(self) -> int:
        '''
        number of trainable scalars
        '''
        return sum(p.size for p in self.trainable_parameters())

    # state

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update((name, b.copy()) for name, b in self.named_buffers())
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray], strict: bool = True) -> None:
        params = dict(self.named_parameters())
        owners = {name: owner for owner, name in self._buffer_owners()}
        expected = set(params) | set(owners)
        missing = sorted(expected - set(state))
        unexpected = sorted(set(state) - expected)
        if strict and (missing or unexpected):
            raise CheckpointMismatch('state dict does not match the model', missing, unexpected)
        for name, value in state.items():
            if name in params:
                p = params[name]
                if p.shape != value.shape:
                    raise CheckpointMismatch(f'`{name}` has shape {value.shape}, model expects {p.shape}')
                p.data = value
            elif name in owners:
                module, local = owners[name]
                current = module._buffers[local]
                if current.shape != value.shape:
                    raise CheckpointMismatch(f'`{name}` has shape {value.shape}, model expects {current.shape}')
                module.set_buffer(local, np.array(value, dtype=current.dtype))
        logger.debug('loaded %d tensors', len(state))

    def _buffer_owners(self, prefix: str = '') -> Iterator[tuple[tuple[Module, str], str]]:
        for name in self._buffers:
            yield (self, name), prefix + name
        for name, m in self._modules.items():
            yield from m._buffer_owners(f'{prefix}{name}.')

    def __repr__(self) -> str:
        children = ', '.join(f'{k}={type(v).__name__}' for k, v in self._modules.items())
        return f'{type(self).__name__}({children})'


class ModuleList(Module):
    _items: list[Module]

    def __init__(self, modules: Sequence[Module] = ()) -> None:
        super().__init__()
        object.__setattr__(self, '_items', [])
        for m in modules:
            self.append(m)

    def append(self, module: Module) -> None:
        if not isinstance(module, Module):
            raise TypeError(f'expected a Module, got {type(module).__name__}')
        self._modules[str(len(self._items))] = module
        self._items.append(module)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError('ModuleList is a container, call its items')


def check_shape(op: str, x: Tensor, ndim: int, channels: int | None = None) -> None:
    if x.ndim != ndim:
        raise ShapeError(op, f'expected a {ndim}-d tensor', (x.shape,))
    if channels is not None and x.shape[1] != channels:
        raise ShapeError(op, f'expected {channels} channels, got {x.shape[1]}', (x.shape,))


__all__ = [
    'Module',
    'ModuleList',
    'Parameter',
    'check_shape',
    'kaiming_uniform',
]
