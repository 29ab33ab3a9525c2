from __future__ import annotations

import os
from dataclasses import dataclass
from dataclasses import field
from logging import getLogger
from pathlib import Path

import numpy as np
import pandas as pd

from cnsnet.config import apply_ablation
from cnsnet.config import Config
from cnsnet.config import GridPolicy
from cnsnet.data.dataset import TripletDataset
from cnsnet.masks.ops import soft_mask_target
from cnsnet.metrics.colorspace import quantize
from cnsnet.metrics.quality import MetricAccumulator
from cnsnet.network.model import grid_policy
from cnsnet.network.model import remove_shadow
from cnsnet.training.trainer import build_datasets
from cnsnet.training.trainer import Trainer

logger = getLogger(__name__)

COMPARED_ABLATIONS = ('wo_soan', 'wo_saat')
SOFT_BASELINE = 0.5


@dataclass(frozen=True)
class LearningReport:
    '''
    held-out numbers of one desk-scale run and its ablations, trained on the
    same seed and budget

    rmse values are shadow-region lab errors; the soft-mask numbers are mean
    l1 distances to the soft target, the baseline predicts 0.5 everywhere
    '''

    identity_rmse_s: float
    rmse_s: float
    soft_loss: float
    soft_baseline: float
    ablations: dict[str, float] = field(default_factory=dict)
    min_gain: float = 0.0

    @property
    def gain(self) -> float:
        return 1 - self.rmse_s / self.identity_rmse_s

    @property
    def beats_identity(self) -> bool:
        return self.gain > self.min_gain

    @property
    def beats_soft_baseline(self) -> bool:
        return self.soft_loss < self.soft_baseline

    @property
    def beats_ablations(self) -> bool:
        return all(self.rmse_s < value for value in self.ablations.values())

    @property
    def passed(self) -> bool:
        return self.beats_identity and self.beats_soft_baseline and self.beats_ablations

    def to_frame(self) -> pd.DataFrame:
        rows = {'identity': self.identity_rmse_s, 'full': self.rmse_s, **self.ablations}
        return pd.DataFrame({'rmse_s': rows})


def identity_rmse_s(dataset: TripletDataset) -> float:
    metrics = MetricAccumulator()
    for triplet in dataset:
        metrics.add(quantize(triplet.shadow), triplet.shadow_free, triplet.mask)
    return metrics.report().rmse_s


def soft_mask_scores(trainer: Trainer, dataset: TripletDataset) -> tuple[float, float]:
    '''
    mean l1 of the predicted soft masks and of a constant 0.5 mask against the soft targets
    '''
    model = trainer.model
    model.eval()
    ours, baseline = [], []
    with grid_policy(model, GridPolicy.INTERPOLATE):
        for triplet in dataset:
            _, soft = remove_shadow(model, triplet.shadow, triplet.mask)
            target = soft_mask_target(triplet.shadow, triplet.shadow_free)
            ours.append(float(np.abs(soft - target).mean()))
            baseline.append(float(np.abs(SOFT_BASELINE - target).mean()))
    model.train()
    return float(np.mean(ours)), float(np.mean(baseline))


def _trained(config: Config, out_dir: Path) -> Trainer:
    train_set, val_set = build_datasets(config)
    trainer = Trainer(config, train_set, val_set, out_dir)
    trainer.run()
    return trainer


def learning_check(
    config: Config,
    out_dir: str | os.PathLike[str],
    ablations: tuple[str, ...] = COMPARED_ABLATIONS,
    min_gain: float = 0.0,
) -> LearningReport:
    '''
    train the configured model and each ablation on the synthetic streams, then
    score them on the held-out stream against the identity and 0.5-mask baselines
    '''
    out = Path(out_dir)
    full = _trained(config, out / 'full')
    rmse_s = full.validate()
    soft_loss, soft_baseline = soft_mask_scores(full, full.val_set)
    identity = identity_rmse_s(full.val_set)
    logger.info('held-out shadow rmse %.3f against %.3f for the input images', rmse_s, identity)

    scores = {}
    for name in ablations:
        scores[name] = _trained(apply_ablation(config, name), out / name).validate()
        logger.info('%s: held-out shadow rmse %.3f', name, scores[name])
    return LearningReport(identity, rmse_s, soft_loss, soft_baseline, scores, min_gain)


__all__ = [
    'COMPARED_ABLATIONS',
    'LearningReport',
    'identity_rmse_s',
    'learning_check',
    'soft_mask_scores',
]
