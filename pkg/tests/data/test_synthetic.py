from __future__ import annotations

import numpy as np
import pytest

from cnsnet.config import SynthSpec
from cnsnet.core.errors import ConfigError
from cnsnet.data.synthetic import shadow_free_scene
from cnsnet.data.synthetic import shadow_matte
from cnsnet.data.synthetic import synth_triplet
from cnsnet.masks.ops import soft_mask_target


def test_triplet_layout():
    triplet = synth_triplet(SynthSpec(size=32), 0)
    assert triplet.shadow.shape == triplet.shadow_free.shape == (3, 32, 32)
    assert triplet.mask.shape == (32, 32)
    assert triplet.shadow.dtype == np.float32
    assert triplet.mask.dtype == np.uint8
    assert triplet.id == 'synth-0'
    assert 0 < triplet.mask.sum() < triplet.mask.size


def test_values_stay_in_range():
    for seed in range(10):
        triplet = synth_triplet(SynthSpec(size=32), seed)
        assert triplet.shadow_free.min() >= 0.0
        assert triplet.shadow_free.max() <= 1.0
        assert (triplet.shadow <= triplet.shadow_free).all()


def test_deterministic_per_seed():
    a = synth_triplet(SynthSpec(size=32), (3, 0, 7))
    b = synth_triplet(SynthSpec(size=32), (3, 0, 7))
    c = synth_triplet(SynthSpec(size=32), (3, 0, 8))
    np.testing.assert_array_equal(a.shadow, b.shadow)
    np.testing.assert_array_equal(a.mask, b.mask)
    assert a.id == 'synth-3-0-7'
    assert not np.array_equal(a.shadow_free, c.shadow_free)


def test_no_attenuation_leaves_the_scene():
    spec = SynthSpec(size=32, attenuation_min=1.0, attenuation_max=1.0)
    triplet = synth_triplet(spec, 1)
    np.testing.assert_array_equal(triplet.shadow, triplet.shadow_free)
    np.testing.assert_array_equal(soft_mask_target(triplet.shadow, triplet.shadow_free), 0.0)


def test_hard_shadow_halves_the_scene():
    spec = SynthSpec(size=32, attenuation_min=0.5, attenuation_max=0.5, blur_min=0.0, blur_max=0.0)
    triplet = synth_triplet(spec, 2)
    inside = triplet.mask.astype(bool)
    np.testing.assert_array_equal(triplet.shadow[:, inside], triplet.shadow_free[:, inside] * 0.5)
    np.testing.assert_array_equal(triplet.shadow[:, ~inside], triplet.shadow_free[:, ~inside])


def test_matte_and_hard_mask_agree():
    spec = SynthSpec(size=32, blur_min=1.0, blur_max=2.0)
    matte, hard = shadow_matte(spec, np.random.default_rng(4))
    assert matte.min() >= 0.0
    assert matte.max() <= 1.0
    np.testing.assert_array_equal(hard, (matte >= 0.5).astype(np.uint8))


def test_scene_without_shapes_is_a_gradient():
    spec = SynthSpec(size=16, shapes_min=0, shapes_max=0, noise=0.0)
    scene = shadow_free_scene(spec, np.random.default_rng(5))
    assert scene.shape == (3, 16, 16)
    # a linear ramp has zero second differences along both axes
    np.testing.assert_allclose(np.diff(scene, 2, axis=-1), 0.0, atol=1e-12)


def test_invalid_spec():
    with pytest.raises(ConfigError):
        synth_triplet(SynthSpec(attenuation_min=0.0), 0)
    with pytest.raises(ConfigError):
        synth_triplet(SynthSpec(shadows_min=3, shadows_max=1), 0)
