from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from cnsnet.config import ABLATIONS
from cnsnet.config import apply_ablation
from cnsnet.config import Config
from cnsnet.config import GridPolicy
from cnsnet.config import ModelConfig
from cnsnet.config import SaatConfig
from cnsnet.core.errors import GridMismatch
from cnsnet.core.errors import ShapeError
from cnsnet.core.gradcheck import check_gradients
from cnsnet.core.tensor import default_dtype
from cnsnet.core.tensor import Tensor
from cnsnet.network.model import CNSNet
from cnsnet.network.model import grid_policy
from cnsnet.network.model import pad_to_multiple
from cnsnet.network.model import remove_shadow


def tiny_config(**kwargs):
    config = ModelConfig(
        base_width=4,
        max_width=8,
        scales=2,
        image_size=16,
        predictor_width=4,
        predictor_scales=2,
        saat=SaatConfig(heads=2, layers=1),
    )
    return replace(config, **kwargs)


def _inputs(size=16, n=1, seed=0):
    rng = np.random.default_rng(seed)
    shadow = Tensor(rng.uniform(size=(n, 3, size, size)))
    mask = np.zeros((n, 1, size, size), dtype=np.float32)
    mask[:, :, size // 4 : size // 2, size // 4 : size // 2] = 1
    return shadow, Tensor(mask)


def test_default_parameter_budget():
    model = CNSNet(ModelConfig())
    assert 800_000 <= model.param_count() <= 1_600_000
    assert model.divisor == 16
    assert model.config.grid == (4, 4)
    assert model.backbone_parameter_count() < model.param_count()


def test_forward_shapes():
    model = CNSNet(tiny_config())
    shadow, mask = _inputs(n=2)
    out, soft = model(shadow, mask)
    assert out.shape == (2, 3, 16, 16)
    assert soft.shape == (2, 1, 16, 16)
    assert 0.0 < out.numpy().min() and out.numpy().max() < 1.0


def test_divisibility_is_enforced():
    model = CNSNet(tiny_config())
    shadow, mask = _inputs(size=18)
    with pytest.raises(ShapeError) as e:
        model(shadow, mask)
    assert 'multiples of 4' in str(e.value)


def test_grid_policy():
    model = CNSNet(tiny_config())
    shadow, mask = _inputs(size=32)
    with pytest.raises(GridMismatch):
        model(shadow, mask)
    with grid_policy(model, GridPolicy.INTERPOLATE):
        assert model(shadow, mask)[0].shape == (1, 3, 32, 32)
    assert model.saat.positional.policy is GridPolicy.STRICT


def test_same_seed_same_model():
    a, b = CNSNet(tiny_config(seed=3)), CNSNet(tiny_config(seed=3))
    shadow, mask = _inputs()
    np.testing.assert_array_equal(a(shadow, mask)[0].numpy(), b(shadow, mask)[0].numpy())


def test_full_forward_gradients_match_finite_differences():
    with default_dtype(np.float64):
        model = CNSNet(tiny_config(seed=2))
        rng = np.random.default_rng(1)
        shadow = Tensor(rng.uniform(0.1, 0.9, size=(1, 3, 16, 16)), requires_grad=True)
        mask = np.zeros((1, 1, 16, 16))
        mask[:, :, 4:11, 3:9] = 1
        hard = Tensor(mask)
        weights = Tensor(rng.normal(size=(1, 3, 16, 16)))

        def fn():
            out, soft = model(shadow, hard)
            return (out * weights).sum() + soft.mean()

        inputs = [shadow, model.stem.weight, model.head.weight]
        # a small step keeps the perturbations clear of leaky-relu kinks
        result = check_gradients(fn, inputs, step=1e-6, max_entries=24, rng=rng, min_checked=12)
    assert result.passed, result


def test_backward_reaches_all_parameters():
    model = CNSNet(tiny_config())
    shadow, mask = _inputs()
    out, soft = model(shadow, mask)
    ((out * out).mean() + soft.mean()).backward()
    missing = [name for name, p in model.named_parameters() if p.grad is None]
    assert missing == []


@pytest.mark.parametrize('ablation', sorted(ABLATIONS))
def test_ablations_run(ablation):
    config = apply_ablation(Config(model=tiny_config()), ablation)
    model = CNSNet(config.model)
    shadow, mask = _inputs()
    assert model(shadow, mask)[0].shape == (1, 3, 16, 16)
    assert (model.saat is None) == (ablation == 'wo_saat')
    # only dropping SAAT and the batch-norm variant change the parameter set
    same = CNSNet(tiny_config()).param_count() == model.param_count()
    assert same == (ablation not in ('wo_saat', 'soan_bn'))


def test_complexity_restores_mode():
    model = CNSNet(tiny_config())
    params, macs = model.complexity(32, 32)
    assert params == model.param_count()
    assert macs > 0
    assert model.training
    assert model.saat.positional.policy is GridPolicy.STRICT

    _, bigger = model.complexity(64, 64)
    assert bigger > macs


def test_pad_to_multiple():
    image = np.arange(2 * 5 * 7, dtype=float).reshape(2, 5, 7)
    padded, size = pad_to_multiple(image, 4)
    assert padded.shape == (2, 8, 8)
    assert size == (5, 7)
    np.testing.assert_array_equal(padded[:, :5, :7], image)

    same, _ = pad_to_multiple(np.zeros((3, 8, 8)), 4)
    assert same.shape == (3, 8, 8)


def test_remove_shadow_any_size():
    model = CNSNet(tiny_config())
    model.eval()
    model.set_grid_policy(GridPolicy.INTERPOLATE)
    rng = np.random.default_rng(0)
    image = rng.uniform(size=(3, 13, 10)).astype(np.float32)
    mask = np.zeros((13, 10), dtype=np.uint8)
    mask[3:8, 2:6] = 1
    output, soft = remove_shadow(model, image, mask)
    assert output.shape == (3, 13, 10)
    assert soft.shape == (13, 10)
