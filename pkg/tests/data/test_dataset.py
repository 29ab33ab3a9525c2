from __future__ import annotations

import logging

import numpy as np
import pytest

from cnsnet.config import SynthSpec
from cnsnet.core.errors import DatasetError
from cnsnet.core.errors import ShapeError
from cnsnet.data.dataset import index_triplets
from cnsnet.data.dataset import load_istd
from cnsnet.data.dataset import materialize
from cnsnet.data.dataset import SyntheticDataset
from cnsnet.data.imageio import read_mask
from cnsnet.data.imageio import read_rgb
from cnsnet.data.imageio import write_mask
from cnsnet.data.imageio import write_rgb
from cnsnet.metrics.colorspace import quantize


@pytest.fixture
def istd(tmp_path):
    dataset = SyntheticDataset(SynthSpec(size=16), 4, seed=1, stream='test')
    materialize(dataset, tmp_path, 'test')
    return tmp_path, dataset


# synthetic


def test_synthetic_ids_and_streams():
    spec = SynthSpec(size=16)
    train = SyntheticDataset(spec, 3, seed=0, stream='train')
    val = SyntheticDataset(spec, 3, seed=0, stream='val')
    assert train.ids == ['train-00000', 'train-00001', 'train-00002']
    assert len(train) == 3
    assert train[2].id == 'train-00002'
    assert train[-1].id == 'train-00002'
    assert not np.array_equal(train[0].shadow_free, val[0].shadow_free)
    np.testing.assert_array_equal(train[1].shadow, SyntheticDataset(spec, 5, seed=0)[1].shadow)

    with pytest.raises(IndexError):
        train[3]
    with pytest.raises(DatasetError):
        SyntheticDataset(spec, 0)


# istd layout


def test_materialize_round_trip(istd):
    root, dataset = istd
    loaded = load_istd(root, 'test')
    assert loaded.ids == dataset.ids
    for original, read in zip(dataset, loaded):
        np.testing.assert_allclose(read.shadow, quantize(original.shadow), atol=1e-6)
        np.testing.assert_array_equal(read.mask, original.mask)


def test_missing_counterpart_is_skipped(istd, caplog):
    root, dataset = istd
    (root / 'test' / 'test_B' / f'{dataset.ids[1]}.png').unlink()
    with caplog.at_level(logging.WARNING):
        files = index_triplets(root, 'test')
    assert [f.id for f in files] == [dataset.ids[i] for i in (0, 2, 3)]
    assert any(dataset.ids[1] in r.getMessage() for r in caplog.records)


def test_generic_folder_names(tmp_path):
    rng = np.random.default_rng(0)
    for name in ('a', 'b'):
        write_rgb(tmp_path / 'shadow' / f'{name}.png', rng.uniform(size=(3, 4, 5)))
        write_mask(tmp_path / 'mask' / f'{name}.png', np.ones((4, 5)))
        write_rgb(tmp_path / 'free' / f'{name}.png', rng.uniform(size=(3, 4, 5)))
    dataset = load_istd(tmp_path, 'train')
    assert dataset.ids == ['a', 'b']
    assert dataset[0].shadow.shape == (3, 4, 5)


def test_bad_roots(tmp_path):
    with pytest.raises(DatasetError):
        load_istd(tmp_path / 'missing')
    with pytest.raises(DatasetError):
        load_istd(tmp_path)
    for folder in ('test_A', 'test_B', 'test_C'):
        (tmp_path / 'test' / folder).mkdir(parents=True)
    with pytest.raises(DatasetError):
        load_istd(tmp_path, 'test')


# image files


def test_mask_threshold(tmp_path):
    path = tmp_path / 'm.png'
    write_mask(path, np.array([[0.0, 127 / 255], [128 / 255, 1.0]]))
    np.testing.assert_array_equal(read_mask(path), [[0, 0], [1, 1]])


def test_rgb_scale(tmp_path):
    path = tmp_path / 'x.png'
    write_rgb(path, np.full((3, 2, 2), 1.0))
    image = read_rgb(path)
    assert image.dtype == np.float32
    np.testing.assert_array_equal(image, 1.0)

    with pytest.raises(ShapeError):
        write_rgb(path, np.zeros((2, 2, 3)))


def test_unreadable_image(tmp_path):
    path = tmp_path / 'broken.png'
    path.write_bytes(b'not a png')
    with pytest.raises(DatasetError):
        read_rgb(path)
