from __future__ import annotations

import json

import numpy as np
import pytest

from cnsnet.config import GridPolicy
from cnsnet.data.dataset import load_istd
from cnsnet.data.imageio import read_mask
from cnsnet.data.imageio import read_rgb
from cnsnet.data.imageio import write_mask
from cnsnet.data.imageio import write_rgb
from cnsnet.main import main
from cnsnet.main import parser_args
from cnsnet.metrics.quality import PSNR_CAP
from cnsnet.metrics.quality import MetricConvention

TINY = '''
model.base_width = 4
model.max_width = 8
model.scales = 2
model.image_size = 16
model.predictor_width = 4
model.predictor_scales = 2
model.saat.heads = 2
model.saat.layers = 1
train.batch_size = 1
train.patch_size = 16
train.steps = 2
train.steps_per_epoch = 2
train.train_count = 2
train.val_count = 1
synth.size = 16
'''


@pytest.fixture(autouse=True)
def no_data_env(monkeypatch):
    monkeypatch.delenv('CNSNET_DATA', raising=False)


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / 'tiny.conf'
    path.write_text(TINY)
    return str(path)


# arguments


def test_parser_defaults():
    args = parser_args(['eval', '--identity'])
    assert args.command == 'eval'
    assert args.grid_policy is GridPolicy.INTERPOLATE
    assert args.convention is MetricConvention.MASKED_IMAGE
    assert not args.full_scale
    assert args.ablation == []

    assert parser_args(['train', '--paper-scale']).full_scale
    assert parser_args(['train', '--full-scale']).full_scale
    assert parser_args(['eval', '--psnr', 'region']).convention is MetricConvention.REGION
    assert parser_args(['selftest', '--learning']).learning
    assert not parser_args(['selftest']).learning

    args = parser_args(['train', '--ablation', 'wo_soan', '--ablation', 'saat_hardmask', '--seed', '3'])
    assert args.ablation == ['wo_soan', 'saat_hardmask']
    assert args.seed == 3

    with pytest.raises(SystemExit):
        parser_args(['train', '--ablation', 'wo_everything'])
    with pytest.raises(SystemExit):
        parser_args(['infer', '--image', 'x.png'])


def test_errors_become_exit_code_one(tmp_path):
    assert main(['eval', '--count', '1']) == 1
    assert main(['synth', '--out', str(tmp_path), '--count', '0']) == 1
    bad = tmp_path / 'bad.conf'
    bad.write_text('model.nonsense = 1\n')
    assert main(['selftest', '--config', str(bad)]) == 1


# commands


def test_synth_writes_the_istd_layout(tmp_path, tiny):
    assert main(['synth', '--config', tiny, '--out', str(tmp_path), '--count', '2', '--split', 'test']) == 0
    dataset = load_istd(tmp_path, 'test')
    assert len(dataset) == 2
    assert dataset[0].shadow.shape == (3, 16, 16)


def test_identity_eval_on_unshadowed_data(tmp_path, tiny):
    conf = tmp_path / 'flat.conf'
    conf.write_text(TINY + 'synth.attenuation_min = 1.0\nsynth.attenuation_max = 1.0\n')
    data = tmp_path / 'data'
    assert main(['synth', '--config', str(conf), '--out', str(data), '--count', '2', '--split', 'test']) == 0

    report = tmp_path / 'report.json'
    assert main(['eval', '--data', str(data), '--identity', '--report', str(report)]) == 0
    document = json.loads(report.read_text())
    assert document['identity'] is True
    assert document['checkpoint'] is None
    assert document['convention'] == 'masked_image'
    metrics = document['metrics']
    assert metrics['images'] == 2
    assert metrics['rmse_s'] == pytest.approx(0.0, abs=1e-6)
    assert metrics['rmse_all'] == pytest.approx(0.0, abs=1e-6)
    assert metrics['psnr_all'] == PSNR_CAP
    assert metrics['ssim_all'] == pytest.approx(1.0)


def test_train_eval_infer(tmp_path, tiny):
    run = tmp_path / 'run'
    assert main(['train', '--config', tiny, '--out', str(run)]) == 0
    checkpoint = run / 'last.ckpt'
    assert checkpoint.is_file()

    report = tmp_path / 'eval.json'
    args = ['eval', '--config', tiny, '--checkpoint', str(checkpoint), '--count', '2', '--report', str(report)]
    assert main(args + ['--workers', '2']) == 0
    metrics = json.loads(report.read_text())['metrics']
    assert metrics['images'] == 2
    assert metrics['count_s'] + metrics['count_ns'] == metrics['count_all']
    assert np.isfinite(metrics['rmse_all'])

    # a different model configuration is refused when one is given explicitly
    assert main(args + ['--ablation', 'wo_saat']) == 1

    rng = np.random.default_rng(0)
    image, mask = tmp_path / 'photo.png', tmp_path / 'photo_mask.png'
    write_rgb(image, rng.uniform(size=(3, 13, 10)))
    write_mask(mask, rng.random((13, 10)) < 0.3)
    out = tmp_path / 'out'
    assert main(['infer', '--checkpoint', str(checkpoint), '--image', str(image), '--mask', str(mask), '--out', str(out)]) == 0
    assert read_rgb(out / 'photo_free.png').shape == (3, 13, 10)
    assert read_mask(out / 'photo_soft.png').shape == (13, 10)


def test_training_resumes_from_a_checkpoint(tmp_path, tiny):
    run = tmp_path / 'run'
    assert main(['train', '--config', tiny, '--out', str(run)]) == 0
    first = (run / 'last.ckpt').read_bytes()
    # the schedule is already complete, resuming only rewrites the same state
    assert main(['train', '--config', tiny, '--out', str(run), '--checkpoint', str(run / 'last.ckpt')]) == 0
    assert (run / 'last.ckpt').read_bytes() == first
