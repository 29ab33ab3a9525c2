from __future__ import annotations

import numpy as np
import pytest

from cnsnet.config import SoanConfig
from cnsnet.config import SoanVariant
from cnsnet.core.errors import ShapeError
from cnsnet.core.gradcheck import check_gradients
from cnsnet.core.tensor import default_dtype
from cnsnet.core.tensor import Tensor
from cnsnet.network.soan import MaskRegion
from cnsnet.network.soan import region_stats
from cnsnet.network.soan import regional_normalize
from cnsnet.network.soan import SOAN
from cnsnet.network.soan import soan_forward
from cnsnet.network.soan import stats_decomposition_check


def _features(seed=0, shape=(2, 4, 8, 8)):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=shape)
    mask = np.zeros((shape[0], 1) + shape[2:])
    mask[:, :, 2:6, 1:5] = 1
    x[:, :, 2:6, 1:5] -= 1.5
    return x, mask


# statistics


def test_region_stats_match_numpy():
    x, mask = _features()
    with default_dtype(np.float64):
        stats = region_stats(Tensor(x), mask, MaskRegion.SHADOW, epsilon=1e-12)
    picked = x[0, 1][mask[0, 0] > 0]
    assert stats.mean.numpy()[0, 1] == pytest.approx(picked.mean())
    assert stats.std.numpy()[0, 1] == pytest.approx(picked.std(), rel=1e-6)
    np.testing.assert_array_equal(stats.count, [16, 16])


def test_region_stats_ignore_pixel_order():
    x, mask = _features(seed=3)
    perm = np.random.default_rng(4).permutation(64)
    shuffled = x.reshape(2, 4, 64)[:, :, perm].reshape(x.shape)
    shuffled_mask = mask.reshape(2, 1, 64)[:, :, perm].reshape(mask.shape)
    with default_dtype(np.float64):
        for region in MaskRegion:
            a = region_stats(Tensor(x), mask, region)
            b = region_stats(Tensor(shuffled), shuffled_mask, region)
            np.testing.assert_allclose(a.mean.numpy(), b.mean.numpy(), rtol=1e-12, atol=1e-14)
            np.testing.assert_allclose(a.std.numpy(), b.std.numpy(), rtol=1e-12)
            np.testing.assert_array_equal(a.count, b.count)


def test_empty_region_stats():
    x, _ = _features()
    stats = region_stats(Tensor(x), np.zeros((8, 8)), MaskRegion.SHADOW, epsilon=1e-4)
    assert stats.empty.all()
    np.testing.assert_allclose(stats.mean.numpy(), 0.0)
    np.testing.assert_allclose(stats.std.numpy(), 1e-2, rtol=1e-4)


def test_mask_shape_is_checked():
    x, _ = _features()
    with pytest.raises(ShapeError):
        region_stats(Tensor(x), np.zeros((4, 4)), MaskRegion.SHADOW)


def test_decomposition_identities():
    for seed in range(20):
        x, mask = _features(seed)
        assert stats_decomposition_check(x, mask).max < 1e-8


# region-wise normalization


def test_shadow_region_takes_lit_statistics():
    x, mask = _features(1)
    with default_dtype(np.float64):
        out, skipped = regional_normalize(Tensor(x), mask, 1e-5)
    assert not skipped.any()
    out = out.numpy()
    inside = mask[0, 0] > 0
    for c in range(4):
        lit = x[0, c][~inside]
        assert out[0, c][inside].mean() == pytest.approx(lit.mean(), abs=1e-8)
        assert out[0, c][inside].std() == pytest.approx(lit.std(), rel=1e-4)
        assert out[0, c][~inside].mean() == pytest.approx(0.0, abs=1e-8)
        assert out[0, c][~inside].std() == pytest.approx(1.0, rel=1e-4)


def test_single_region_samples_pass_through():
    x, mask = _features()
    mask[1] = 0
    with default_dtype(np.float64):
        out, skipped = regional_normalize(Tensor(x), mask, 1e-5)
    np.testing.assert_array_equal(skipped, [False, True])
    np.testing.assert_array_equal(out.numpy()[1], x[1])


def test_regional_normalize_gradients():
    x, mask = _features(2, shape=(1, 2, 4, 4))
    with default_dtype(np.float64):
        t = Tensor(x, requires_grad=True)
        weights = Tensor(np.random.default_rng(3).normal(size=x.shape))
        result = check_gradients(lambda: (regional_normalize(t, mask, 1e-5)[0] * weights).sum(), [t])
    assert result.passed, result.errors


# block


def test_soan_block_shapes_and_residual():
    rng = np.random.default_rng(0)
    block = SOAN(4, 6, SoanConfig(), rng)
    x, mask = _features()
    out = block(Tensor(x.astype(np.float32)), mask)
    assert out.shape == (2, 6, 8, 8)
    assert block.fallbacks == 0

    with pytest.raises(ShapeError):
        SOAN(3, 6, SoanConfig(), rng)


def test_soan_normalizes_only_the_first_half():
    block = SOAN(4, 4, SoanConfig(), np.random.default_rng(0))
    x, mask = _features()
    with default_dtype(np.float64):
        merged = block.normalize(Tensor(x), mask).numpy()
    np.testing.assert_array_equal(merged[:, 2:], x[:, 2:])
    assert not np.allclose(merged[:, :2], x[:, :2])


def test_soan_counts_fallbacks():
    block = SOAN(4, 4, SoanConfig(), np.random.default_rng(0))
    x, _ = _features()
    block(Tensor(x.astype(np.float32)), np.ones((8, 8)))
    assert block.fallbacks == 2


@pytest.mark.parametrize('variant', [SoanVariant.BN, SoanVariant.IN])
def test_soan_variants(variant):
    block = SOAN(4, 4, SoanConfig(variant=variant), np.random.default_rng(0))
    x, mask = _features()
    assert (block.norm is not None) == (variant is SoanVariant.BN)
    assert block(Tensor(x.astype(np.float32)), mask).shape == (2, 4, 8, 8)


def test_disabled_soan_skips_normalization():
    block = SOAN(4, 4, SoanConfig(), np.random.default_rng(0), enabled=False)
    x, mask = _features()
    with default_dtype(np.float64):
        np.testing.assert_array_equal(block.normalize(Tensor(x), mask).numpy(), x)


def test_soan_forward_runs_the_block():
    x, mask = _features()
    block = SOAN(4, 6, SoanConfig(), np.random.default_rng(0))
    np.testing.assert_array_equal(soan_forward(Tensor(x), mask, block).numpy(), block(Tensor(x), mask).numpy())
