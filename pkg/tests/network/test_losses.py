from __future__ import annotations

import numpy as np
import pytest

from cnsnet.config import LossWeights
from cnsnet.core.errors import ShapeError
from cnsnet.core.gradcheck import check_gradients
from cnsnet.core.tensor import default_dtype
from cnsnet.core.tensor import Tensor
from cnsnet.network.losses import loss_grad
from cnsnet.network.losses import loss_per
from cnsnet.network.losses import loss_rem
from cnsnet.network.losses import loss_total
from cnsnet.network.losses import RemovalLoss
from cnsnet.network.perceptual import PerceptualExtractor


def _images(size=16, seed=0):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(size=(1, 3, size, size))
    shadow = gt.copy()
    mask = np.zeros((size, size))
    mask[4:10, 5:12] = 1
    shadow[:, :, mask > 0] *= 0.4
    return shadow, gt, mask


def test_loss_rem():
    shadow, gt, _ = _images()
    assert loss_rem(Tensor(gt), gt).item() == pytest.approx(0.0)
    assert loss_rem(Tensor(shadow), gt).item() == pytest.approx(np.abs(shadow - gt).mean(), rel=1e-5)
    with pytest.raises(ShapeError):
        loss_rem(Tensor(gt), gt[:, :2])


def test_loss_per():
    shadow, gt, _ = _images()
    extractor = PerceptualExtractor(seed=0)
    assert loss_per(Tensor(gt), gt, extractor).item() == pytest.approx(0.0, abs=1e-6)

    out = Tensor(shadow, requires_grad=True)
    loss = loss_per(out, gt, extractor)
    assert loss.item() > 0
    loss.backward()
    assert out.grad is not None
    assert all(p.grad is None for p in extractor.parameters())


def test_loss_grad_regions():
    shadow, gt, mask = _images()
    # outside the dilated band the output should keep the input texture
    assert loss_grad(Tensor(shadow), shadow, gt, np.zeros_like(mask)).item() == pytest.approx(0.0)
    # inside the band it should follow the ground truth
    assert loss_grad(Tensor(gt), shadow, gt, np.ones_like(mask)).item() == pytest.approx(0.0)
    assert loss_grad(Tensor(gt), shadow, gt, mask, dilation=0).item() > 0

    with pytest.raises(ShapeError):
        loss_grad(Tensor(gt), shadow, gt, mask[:8])


def test_loss_grad_gradients():
    shadow, gt, mask = _images(size=8)
    mask = mask[:8, :8]
    with default_dtype(np.float64):
        out = Tensor(np.random.default_rng(1).uniform(size=gt.shape), requires_grad=True)
        result = check_gradients(lambda: loss_grad(out, shadow, gt, mask, dilation=1), [out])
    assert result.passed, result.errors


def test_loss_total_weights():
    weights = LossWeights(rem=10.0, soft=5.0, per=1.0, grad=2.0)
    assert loss_total([1.0, 1.0, 1.0, 1.0], weights) == pytest.approx(18.0)
    assert loss_total([0.5, 0.0, 0.0, 0.0], weights) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        loss_total([1.0, 1.0], weights)


def test_loss_total_is_linear():
    assert loss_total([1.0, 1.0, 1.0, 1.0], LossWeights()) == pytest.approx(17.0)
    assert loss_total([0.0, 0.0, 0.0, 0.0], LossWeights()) == 0.0

    rng = np.random.default_rng(3)
    weights = LossWeights(rem=2.5, soft=0.5, per=3.0, grad=1.5)
    a, b = rng.uniform(size=4), rng.uniform(size=4)
    lam = np.array(weights.as_tuple())
    assert loss_total(list(a), weights) == pytest.approx(float(a @ lam))
    combined = loss_total(list(2 * a + b), weights)
    assert combined == pytest.approx(2 * loss_total(list(a), weights) + loss_total(list(b), weights))


def test_removal_loss_parts():
    shadow, gt, mask = _images()
    criterion = RemovalLoss(LossWeights(), seed=0)
    out = Tensor(shadow, requires_grad=True)
    soft = Tensor(np.full((1, 1, 16, 16), 0.5), requires_grad=True)
    parts = criterion(out, soft, shadow, gt, mask.reshape(1, 1, 16, 16), np.zeros((1, 1, 16, 16)))

    values = parts.as_floats()
    assert set(values) == {'rem', 'soft', 'per', 'grad', 'total'}
    assert values['soft'] == pytest.approx(0.5)
    expected = 10 * values['rem'] + 5 * values['soft'] + values['per'] + values['grad']
    assert values['total'] == pytest.approx(expected, rel=1e-5)

    parts.total.backward()
    assert out.grad is not None
    assert soft.grad is not None


def test_loss_parts_are_non_negative():
    criterion = RemovalLoss(LossWeights(), seed=1)
    for seed in range(3):
        shadow, gt, mask = _images(seed=seed)
        rng = np.random.default_rng(seed)
        out = Tensor(rng.uniform(size=gt.shape))
        soft = Tensor(rng.uniform(size=(1, 1, 16, 16)))
        values = criterion(out, soft, shadow, gt, mask.reshape(1, 1, 16, 16), rng.uniform(size=(1, 1, 16, 16))).as_floats()
        assert all(v >= 0 for v in values.values()), values
