from __future__ import annotations

import numpy as np
import pytest

from cnsnet.core.errors import GradientError
from cnsnet.core.functional import leaky_relu
from cnsnet.core.gradcheck import check_gradients
from cnsnet.core.tensor import default_dtype
from cnsnet.core.tensor import Tensor


def test_correct_gradients_pass():
    with default_dtype(np.float64):
        x = Tensor([0.3, -1.2, 2.0], requires_grad=True)
        result = check_gradients(lambda: (x * x * x).sum(), [x])
    assert result.passed
    assert result.checked_entries == (3,)
    assert result.max_error < 1e-6


def test_wrong_gradients_fail():
    with default_dtype(np.float64):
        x = Tensor([0.3, -1.2, 2.0], requires_grad=True)

        def fn():
            y = (x * x).sum()
            # same value, wrong derivative
            return Tensor._from_op('broken', y.data.copy(), (x,), lambda g: (np.zeros(3),))

        result = check_gradients(fn, [x])
    assert not result.passed


def test_kinks_are_skipped():
    with default_dtype(np.float64):
        x = Tensor([0.0, 1.0, -1.0], requires_grad=True)
        result = check_gradients(lambda: leaky_relu(x).sum(), [x])
        strict = check_gradients(lambda: leaky_relu(x).sum(), [x], kink_tolerance=None)
    assert result.passed
    assert result.skipped_entries == (1,)
    assert not strict.passed


def test_max_entries_samples_coordinates():
    with default_dtype(np.float64):
        x = Tensor(np.linspace(1, 2, 50), requires_grad=True)
        result = check_gradients(lambda: (x * x).sum(), [x], max_entries=7)
    assert result.checked_entries == (7,)


def test_inputs_must_require_gradients():
    with pytest.raises(GradientError):
        check_gradients(lambda: Tensor(1.0), [Tensor([1.0])])


def test_inputs_are_restored():
    with default_dtype(np.float64):
        x = Tensor([0.5, 1.5], requires_grad=True)
        before = x.numpy().copy()
        check_gradients(lambda: (x * x).sum(), [x])
    np.testing.assert_array_equal(x.numpy(), before)


def test_all_coordinates_at_kinks_fail():
    with default_dtype(np.float64):
        x = Tensor([0.0, 0.0], requires_grad=True)
        result = check_gradients(lambda: leaky_relu(x).sum(), [x])
    assert result.checked_entries == (0,)
    assert result.skipped_entries == (2,)
    assert result.max_error == 0.0
    assert not result.enough_checked
    assert not result.passed


def test_min_checked_counts_every_input():
    with default_dtype(np.float64):
        x = Tensor([0.0, 1.0, -1.0, 2.0], requires_grad=True)
        loose = check_gradients(lambda: leaky_relu(x).sum(), [x], min_checked=3)
        tight = check_gradients(lambda: leaky_relu(x).sum(), [x], min_checked=4)
    assert loose.checked_entries == (3,)
    assert loose.passed
    assert not tight.passed
