from __future__ import annotations

import numpy as np
import pytest

from cnsnet.core.errors import GradientError
from cnsnet.core.errors import NonFiniteError
from cnsnet.core.errors import ShapeError
from cnsnet.core.tensor import concat
from cnsnet.core.tensor import default_dtype
from cnsnet.core.tensor import expand
from cnsnet.core.tensor import GradTape
from cnsnet.core.tensor import masked_fill
from cnsnet.core.tensor import masked_select
from cnsnet.core.tensor import matmul
from cnsnet.core.tensor import no_grad
from cnsnet.core.tensor import split
from cnsnet.core.tensor import sqrt
from cnsnet.core.tensor import stack
from cnsnet.core.tensor import Tensor


def test_elementwise_gradients():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    y = (x * x + 2 * x - x / 2).sum()
    y.backward()

    np.testing.assert_allclose(x.grad, 2 * x.numpy() + 1.5)
    assert y.item() == pytest.approx(14 + 12 - 3)


def test_shared_subexpression_is_summed_once():
    a = Tensor(3.0, requires_grad=True)
    b = a * a
    c = b + b
    c.backward()
    assert a.grad == pytest.approx(12.0)

    # a second backward accumulates into the leaf
    (a * 2).backward()
    assert a.grad == pytest.approx(14.0)


def test_tape_order():
    x = Tensor(np.ones(3), requires_grad=True)
    w = Tensor(np.full(3, 2.0), requires_grad=True)
    loss = (x * w).sum()
    tape = GradTape.record(loss)

    assert tape.ops == ['mul', 'sum']
    assert {id(t) for t in tape.leaves} == {id(x), id(w)}
    assert len(tape) == 4


def test_backward_contract():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(GradientError):
        (x * 2).backward()
    with pytest.raises(GradientError):
        Tensor(1.0).backward()


def test_no_grad():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = x * 2
    assert not y.requires_grad
    assert y.op is None
    assert (x * 2).requires_grad


def test_default_dtype():
    assert Tensor([1.0]).dtype == np.float32
    with default_dtype(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32
    with pytest.raises(TypeError):
        with default_dtype(np.int64):  # type: ignore[arg-type]
            pass


def test_non_finite_results_raise():
    with np.errstate(all='ignore'):
        with pytest.raises(NonFiniteError) as e:
            Tensor([0.0]).log()
    assert e.value.op == 'log'


def test_broadcasting_is_explicit():
    a = Tensor(np.ones((2, 3)))
    with pytest.raises(ShapeError):
        a + Tensor(np.ones(3))
    np.testing.assert_array_equal((a + 1).numpy(), np.full((2, 3), 2.0))
    np.testing.assert_array_equal((a * Tensor([3.0])).numpy(), np.full((2, 3), 3.0))


def test_expand_gradient():
    x = Tensor(np.arange(3.0).reshape(1, 3), requires_grad=True)
    expand(x, (4, 3)).sum().backward()
    np.testing.assert_array_equal(x.grad, np.full((1, 3), 4.0))

    with pytest.raises(ShapeError):
        expand(Tensor(np.ones((2, 3))), (4, 3))


def test_split_concat_stack():
    x = Tensor(np.arange(12.0).reshape(2, 6), requires_grad=True)
    first, second = split(x, 2, axis=1)
    assert first.shape == second.shape == (2, 3)
    swapped = concat([second, first], axis=1)
    np.testing.assert_array_equal(swapped.numpy()[:, :3], x.numpy()[:, 3:])
    (swapped * Tensor(np.arange(12.0).reshape(2, 6))).sum().backward()
    np.testing.assert_array_equal(x.grad[:, :3], np.arange(12.0).reshape(2, 6)[:, 3:])

    parts = split(Tensor(np.ones((5, 2))), [2, 3])
    assert [p.shape for p in parts] == [(2, 2), (3, 2)]
    with pytest.raises(ShapeError):
        split(Tensor(np.ones((5, 2))), 2)

    assert stack([Tensor(np.ones(3)), Tensor(np.zeros(3))], axis=0).shape == (2, 3)


def test_fancy_index_accumulates():
    x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    x[np.array([0, 0, 1])].sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0, 1.0, 0.0])


def test_masked_ops():
    x = Tensor(np.arange(4.0).reshape(2, 2), requires_grad=True)
    mask = np.array([[True, False], [False, True]])
    picked = masked_select(x, mask)
    np.testing.assert_array_equal(picked.numpy(), [0.0, 3.0])
    picked.sum().backward()
    np.testing.assert_array_equal(x.grad, mask.astype(float))

    filled = masked_fill(x, mask, -1.0)
    np.testing.assert_array_equal(filled.numpy(), [[-1.0, 1.0], [2.0, -1.0]])


def test_matmul_gradients():
    rng = np.random.default_rng(0)
    with default_dtype(np.float64):
        a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        matmul(a, b).sum().backward()
    np.testing.assert_allclose(a.grad, np.broadcast_to(b.numpy().sum(axis=1), (2, 3, 4)))
    np.testing.assert_allclose(b.grad, np.broadcast_to(a.numpy().sum(axis=(0, 1))[:, None], (4, 5)))

    with pytest.raises(ShapeError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))


def test_sqrt_has_zero_subgradient_at_origin():
    x = Tensor([0.0, 4.0], requires_grad=True)
    sqrt(x).sum().backward()
    np.testing.assert_allclose(x.grad, [0.0, 0.25])


def test_numpy_operands_defer_to_tensor():
    x = Tensor(np.ones(3))
    assert isinstance(np.float32(2) * x, Tensor)
