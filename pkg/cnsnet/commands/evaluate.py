from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from logging import getLogger
from pathlib import Path

from tqdm import tqdm

from cnsnet.config import Config
from cnsnet.config import GridPolicy
from cnsnet.core.errors import ConfigError
from cnsnet.core.runtime import float_traps
from cnsnet.core.tensor import no_grad
from cnsnet.data.dataset import load_istd
from cnsnet.data.dataset import SyntheticDataset
from cnsnet.data.dataset import TripletDataset
from cnsnet.metrics.colorspace import quantize
from cnsnet.metrics.quality import MetricAccumulator
from cnsnet.metrics.quality import MetricConvention
from cnsnet.metrics.quality import MetricReport
from cnsnet.network.model import CNSNet
from cnsnet.network.model import remove_shadow
from cnsnet.training.checkpoint import load_checkpoint

logger = getLogger(__name__)


def eval_dataset(config: Config, split: str = 'test', count: int | None = None) -> TripletDataset:
    if config.DATA_PATH is not None:
        return load_istd(config.DATA_PATH, 'train' if split == 'train' else 'test')
    return SyntheticDataset(config.synth, count or config.train.val_count, config.seed, 'test')


def score(
    model: CNSNet | None,
    dataset: TripletDataset,
    convention: MetricConvention = MetricConvention.MASKED_IMAGE,
    workers: int = 1,
) -> MetricReport:
    '''
    pooled metrics of 8-bit quantized predictions; without a model the input
    image itself is scored

    images may be processed concurrently, each worker sets its own float traps
    and the per-image sums are folded in dataset order
    '''

    def one(index: int) -> MetricAccumulator:
        with float_traps():
            triplet = dataset[index]
            prediction = triplet.shadow if model is None else remove_shadow(model, triplet.shadow, triplet.mask)[0]
            metrics = MetricAccumulator(convention)
            metrics.add(quantize(prediction), triplet.shadow_free, triplet.mask)
        return metrics

    total = MetricAccumulator(convention)
    with no_grad(), ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        for metrics in tqdm(pool.map(one, range(len(dataset))), total=len(dataset), desc='eval'):
            total.merge(metrics)
    return total.report()


def evaluate(
    config: Config,
    checkpoint: str | os.PathLike[str] | None = None,
    identity: bool = False,
    split: str = 'test',
    count: int | None = None,
    report: str | os.PathLike[str] | None = None,
    grid_policy: GridPolicy = GridPolicy.INTERPOLATE,
    convention: MetricConvention = MetricConvention.MASKED_IMAGE,
    match_config: bool = False,
    workers: int = 1,
) -> int:
    '''
    score a checkpoint (or, with `identity`, the input images) on a split;
    with `match_config` the given model configuration must equal the one
    stored in the checkpoint
    '''
    model = None
    if not identity:
        if checkpoint is None:
            raise ConfigError('eval needs --checkpoint unless --identity is given')
        model = load_checkpoint(checkpoint, config if match_config else None).build_model()
        model.eval()
        model.set_grid_policy(grid_policy)

    dataset = eval_dataset(config, split, count)
    result = score(model, dataset, convention, workers)
    print(result.to_frame().to_string(float_format=lambda v: f'{v:.4g}'))
    logger.info('scored %d triplets (%s)', result.images, 'input images' if identity else checkpoint)

    if report is not None:
        document = {
            'split': split,
            'identity': identity,
            'checkpoint': None if checkpoint is None else str(checkpoint),
            'convention': convention.value,
            'metrics': result.to_dict(),
        }
        path = Path(report)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(document, indent=2) + '\n')
        logger.info('wrote %s', path)
    return 0


__all__ = [
    'eval_dataset',
    'evaluate',
    'score',
]
