from __future__ import annotations

import math
from collections.abc import Iterable
from collections.abc import Mapping
from dataclasses import dataclass
from dataclasses import field
from logging import getLogger

import numpy as np

from cnsnet.config import AdamConfig
from cnsnet.core.errors import CheckpointMismatch
from cnsnet.core.errors import NonFiniteGradient
from cnsnet.core.module import Parameter

logger = getLogger(__name__)


@dataclass
class AdamState:
    '''
    step count and per-parameter first / second moments, keyed by parameter name
    '''

    step: int = 0
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)

    def tensors(self) -> dict[str, np.ndarray]:
        out = {f'adam.first.{k}': v for k, v in self.first.items()}
        out.update((f'adam.second.{k}', v) for k, v in self.second.items())
        return out

    @classmethod
    def from_tensors(cls, step: int, tensors: Mapping[str, np.ndarray]) -> AdamState:
        state = cls(step)
        for key, value in tensors.items():
            kind, _, name = key.removeprefix('adam.').partition('.')
            if kind == 'first':
                state.first[name] = value
            elif kind == 'second':
                state.second[name] = value
        if set(state.first) != set(state.second):
            raise CheckpointMismatch('optimizer moments are incomplete')
        return state


def adam_step(
    params: Mapping[str, Parameter],
    state: AdamState,
    config: AdamConfig,
    lr: float | None = None,
) -> AdamState:
    '''
    one bias-corrected Adam update of every parameter with a gradient

    all gradients are checked before any parameter moves, a non-finite one
    raises NonFiniteGradient naming it
    '''
    grads = {}
    for name, p in params.items():
        if p.grad is None:
            continue
        if not np.isfinite(p.grad).all():
            raise NonFiniteGradient(name)
        grads[name] = p.grad

    lr = config.lr if lr is None else lr
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    for name, g in grads.items():
        p = params[name]
        m = state.first.get(name, np.zeros_like(p.data))
        v = state.second.get(name, np.zeros_like(p.data))
        m = (b1 * m + (1 - b1) * g).astype(p.dtype)
        v = (b2 * v + (1 - b2) * (g * g)).astype(p.dtype)
        state.first[name] = m
        state.second[name] = v
        update = lr * (m / c1) / (np.sqrt(v / c2) + config.eps)
        p.data = (p.data - update).astype(p.dtype)
    return state


class Adam:
    def __init__(self, params: Iterable[tuple[str, Parameter]], config: AdamConfig) -> None:
        self.params = {name: p for name, p in params if p.requires_grad}
        self.config = config
        self.lr = config.lr
        self.state = AdamState()

    def step(self) -> None:
        adam_step(self.params, self.state, self.config, self.lr)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def load_state(self, state: AdamState, lr: float) -> None:
        unknown = sorted(set(state.first) - set(self.params))
        if unknown:
            raise CheckpointMismatch('optimizer moments for unknown parameters', unexpected=unknown)
        self.state = state
        self.lr = lr


@dataclass
class PlateauDecay:
    '''
    multiply the learning rate by `factor` once the monitored value has not
    improved for `patience` consecutive evaluations
    '''

    factor: float = 0.5
    patience: int = 10
    min_lr: float = 1e-6
    best: float = math.inf
    bad_epochs: int = 0

    @classmethod
    def from_config(cls, config: AdamConfig) -> PlateauDecay:
        return cls(config.decay_factor, config.patience, config.min_lr)

    def update(self, value: float, lr: float) -> float:
        if value < self.best:
            self.best = value
            self.bad_epochs = 0
            return lr
        self.bad_epochs += 1
        if self.bad_epochs < self.patience:
            return lr
        self.bad_epochs = 0
        decayed = max(lr * self.factor, self.min_lr)
        if decayed < lr:
            logger.info('validation stalled for %d evaluations, lr %.3g -> %.3g', self.patience, lr, decayed)
        return decayed


__all__ = [
    'Adam',
    'AdamState',
    'PlateauDecay',
    'adam_step',
]
