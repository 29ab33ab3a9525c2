from __future__ import annotations

import math

from cnsnet.commands.selftest import CHECKS
from cnsnet.commands.selftest import run_checks
from cnsnet.core import functional as F


def test_registered_checks():
    assert {'conv2d_gradient', 'soan_gradient', 'attention_gradient', 'saat_gradient', 'param_budget'} <= set(CHECKS)


def test_cheap_checks_pass():
    table = run_checks(['conv2d_gradient', 'soft_mask_oracle', 'metric_oracles', 'archive_roundtrip'])
    assert list(table.index) == ['conv2d_gradient', 'soft_mask_oracle', 'metric_oracles', 'archive_roundtrip']
    assert table['passed'].all()
    assert (table['seconds'] >= 0).all()


def test_block_gradient_checks_pass():
    table = run_checks(['soan_gradient', 'attention_gradient', 'saat_gradient', 'stats_decomposition'], seed=3)
    assert table['passed'].all()


def test_broken_conv_backward_is_caught(monkeypatch):
    original = F._conv2d_grad_input

    def doubled(*args, **kwargs):
        return 2 * original(*args, **kwargs)

    monkeypatch.setattr(F, '_conv2d_grad_input', doubled)
    table = run_checks(['conv2d_gradient'])
    assert not table.loc['conv2d_gradient', 'passed']
    assert table.loc['conv2d_gradient', 'value'] > table.loc['conv2d_gradient', 'limit']


def test_crashing_check_fails(monkeypatch):
    def boom(seed):
        raise RuntimeError('broken')

    monkeypatch.setitem(CHECKS, 'boom', boom)
    table = run_checks(['boom'])
    assert not table.loc['boom', 'passed']
    assert math.isnan(table.loc['boom', 'value'])
