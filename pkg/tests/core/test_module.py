from __future__ import annotations

import numpy as np
import pytest

from cnsnet.core.errors import CheckpointMismatch
from cnsnet.core.module import kaiming_uniform
from cnsnet.core.module import Module
from cnsnet.core.module import ModuleList
from cnsnet.core.module import Parameter
from cnsnet.core.tensor import Tensor


class Scale(Module):
    def __init__(self, width):
        super().__init__()
        self.weight = Parameter(np.ones(width))
        self.register_buffer('count', np.zeros(1, dtype=np.int64))

    def forward(self, x):
        return x * self.weight


class Stack(Module):
    def __init__(self):
        super().__init__()
        self.first = Scale(2)
        self.rest = ModuleList([Scale(2), Scale(2)])
        self.bias = Parameter(np.zeros(2))

    def forward(self, x):
        x = self.first(x)
        for m in self.rest:
            x = m(x)
        return x + self.bias


def test_registration_order():
    names = [name for name, _ in Stack().named_parameters()]
    assert names == ['bias', 'first.weight', 'rest.0.weight', 'rest.1.weight']
    assert [name for name, _ in Stack().named_buffers()] == ['first.count', 'rest.0.count', 'rest.1.count']


def test_param_count_and_freeze():
    model = Stack()
    assert model.param_count() == 8
    model.first.freeze()
    assert model.param_count() == 6
    assert len(model.trainable_parameters()) == 3


def test_modes_propagate():
    model = Stack()
    model.eval()
    assert not any(m.training for m in model.modules())
    model.train()
    assert all(m.training for m in model.modules())


def test_state_dict_round_trip():
    source, target = Stack(), Stack()
    source.first.weight.data = np.full(2, 3.0)
    source.rest[1].set_buffer('count', np.array([5]))
    target.load_state_dict(source.state_dict())

    np.testing.assert_array_equal(target.first.weight.numpy(), [3.0, 3.0])
    np.testing.assert_array_equal(target.rest[1].count, [5])
    assert target.rest[1].count.dtype == np.int64


def test_load_state_dict_mismatch():
    state = Stack().state_dict()
    del state['bias']
    state['extra'] = np.zeros(1)
    with pytest.raises(CheckpointMismatch) as e:
        Stack().load_state_dict(state)
    assert e.value.missing == ('bias',)
    assert e.value.unexpected == ('extra',)

    state = Stack().state_dict()
    state['bias'] = np.zeros(3)
    with pytest.raises(CheckpointMismatch):
        Stack().load_state_dict(state)


def test_gradients_reach_nested_parameters():
    model = Stack()
    model(Tensor(np.ones(2))).sum().backward()
    assert all(p.grad is not None for p in model.parameters())
    model.zero_grad()
    assert all(p.grad is None for p in model.parameters())


def test_missing_super_init():
    class Broken(Module):
        def __init__(self):
            self.weight = Parameter(np.ones(1))

        def forward(self, x):
            return x

    with pytest.raises(RuntimeError):
        Broken()


def test_module_list_rejects_non_modules():
    with pytest.raises(TypeError):
        ModuleList([object()])


def test_kaiming_uniform_bounds():
    w = kaiming_uniform((64, 9), fan_in=9, rng=np.random.default_rng(0))
    bound = np.sqrt(2.0 / 1.04) * np.sqrt(3.0 / 9)
    assert w.dtype == np.float32
    assert np.abs(w).max() <= bound + 1e-6
