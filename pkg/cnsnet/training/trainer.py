from __future__ import annotations

import math
import os
from dataclasses import dataclass
from logging import getLogger
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from cnsnet.config import Config
from cnsnet.config import GridPolicy
from cnsnet.core.errors import DatasetError
from cnsnet.core.tensor import no_grad
from cnsnet.core.tensor import Tensor
from cnsnet.data.augment import augment
from cnsnet.data.dataset import load_istd
from cnsnet.data.dataset import SyntheticDataset
from cnsnet.data.dataset import TripletDataset
from cnsnet.data.triplet import ImageTriplet
from cnsnet.data.triplet import stack_triplets
from cnsnet.masks.ops import soft_mask_target
from cnsnet.metrics.colorspace import quantize
from cnsnet.metrics.quality import MetricAccumulator
from cnsnet.network.losses import RemovalLoss
from cnsnet.network.model import CNSNet
from cnsnet.network.model import grid_policy
from cnsnet.network.model import remove_shadow
from cnsnet.training.checkpoint import Checkpoint
from cnsnet.training.checkpoint import load_checkpoint
from cnsnet.training.checkpoint import save_checkpoint
from cnsnet.training.checkpoint import TrainState
from cnsnet.training.optimizer import Adam
from cnsnet.training.optimizer import PlateauDecay

logger = getLogger(__name__)

LAST = 'last.ckpt'
BEST = 'best.ckpt'


class HeldOut(TripletDataset):
    def __init__(self, dataset: TripletDataset, indices: list[int]) -> None:
        self.dataset = dataset
        self.indices = indices

    @property
    def ids(self) -> list[str]:
        ids = self.dataset.ids
        return [ids[i] for i in self.indices]

    def get(self, index: int) -> ImageTriplet:
        return self.dataset.get(self.indices[index])


def split_holdout(dataset: TripletDataset, count: int) -> tuple[TripletDataset, TripletDataset]:
    '''
    the last `count` triplets (by id) become the validation set
    '''
    n = len(dataset)
    if count >= n:
        raise DatasetError(f'cannot hold out {count} of {n} triplets for validation')
    return HeldOut(dataset, list(range(n - count))), HeldOut(dataset, list(range(n - count, n)))


def build_datasets(config: Config) -> tuple[TripletDataset, TripletDataset]:
    if config.DATA_PATH is not None:
        return split_holdout(load_istd(config.DATA_PATH, 'train'), config.train.val_count)
    return (
        SyntheticDataset(config.synth, config.train.train_count, config.seed, 'train'),
        SyntheticDataset(config.synth, max(config.train.val_count, 1), config.seed, 'val'),
    )


@dataclass(frozen=True)
class Schedule:
    total_steps: int
    steps_per_epoch: int

    @classmethod
    def from_config(cls, config: Config, train_size: int) -> Schedule:
        train = config.train
        if train.epochs:
            per_epoch = math.ceil(train_size / train.batch_size)
            return cls(train.epochs * per_epoch, per_epoch)
        return cls(train.steps, train.steps_per_epoch)


@dataclass(frozen=True)
class Batch:
    shadow: np.ndarray
    mask: np.ndarray
    shadow_free: np.ndarray
    soft_target: np.ndarray


def batch_plan(seed: int, step: int, schedule: Schedule, size: int, batch_size: int) -> list[int]:
    '''
    dataset indices of one step, a fresh permutation per epoch seeded by (seed, epoch)
    '''
    epoch, k = divmod(step, schedule.steps_per_epoch)
    order = np.random.default_rng((seed, epoch)).permutation(size)
    return [int(order[(k * batch_size + j) % size]) for j in range(batch_size)]


def make_batch(dataset: TripletDataset, step: int, config: Config, schedule: Schedule) -> Batch:
    train = config.train
    epoch, k = divmod(step, schedule.steps_per_epoch)
    triplets = []
    for j, index in enumerate(batch_plan(config.seed, step, schedule, len(dataset), train.batch_size)):
        triplets.append(
            augment(
                dataset[index],
                (config.seed, epoch, k, j),
                crop_size=train.patch_size if train.crop else None,
                rotate=train.rotate,
                flip=train.flip,
            )
        )
    shadow, mask, free = stack_triplets(triplets)
    return Batch(shadow, mask, free, soft_mask_target(shadow, free))


@dataclass(frozen=True)
class TrainResult:
    history: pd.DataFrame
    best_val: float
    last: Path
    best: Path | None


class Trainer:
    '''
    owns the model, the loss and the optimizer; every random draw is derived
    from (seed, epoch, step) so a resumed run replays an uninterrupted one
    '''

    def __init__(
        self,
        config: Config,
        train_set: TripletDataset,
        val_set: TripletDataset,
        out_dir: str | os.PathLike[str],
        checkpoint: Checkpoint | None = None,
    ) -> None:
        if not len(train_set):
            raise DatasetError('training set is empty')
        self.config = config
        self.train_set = train_set
        self.val_set = val_set
        self.out_dir = Path(out_dir)
        self.schedule = Schedule.from_config(config, len(train_set))
        self.loss = RemovalLoss(config.model.loss, seed=config.seed)
        self.plateau = PlateauDecay.from_config(config.adam)

        if checkpoint is None:
            self.model = CNSNet(config.model)
            self.optimizer = Adam(self.model.named_parameters(), config.adam)
            self.state = TrainState(seed=config.seed, lr=config.adam.lr)
        else:
            self.model = checkpoint.build_model()
            self.optimizer = Adam(self.model.named_parameters(), config.adam)
            self.state = checkpoint.state
            self.optimizer.load_state(checkpoint.optimizer, checkpoint.state.lr)
            self.plateau.best = checkpoint.state.plateau_best
            self.plateau.bad_epochs = checkpoint.state.plateau_bad
        self.history: list[dict[str, float]] = []

    @classmethod
    def resume(
        cls,
        path: str | os.PathLike[str],
        train_set: TripletDataset,
        val_set: TripletDataset,
        out_dir: str | os.PathLike[str],
    ) -> Trainer:
        checkpoint = load_checkpoint(path)
        return cls(checkpoint.config, train_set, val_set, out_dir, checkpoint)

    def step(self) -> dict[str, float]:
        t = self.state.step
        batch = make_batch(self.train_set, t, self.config, self.schedule)
        self.model.train()
        self.model.zero_grad()
        output, soft = self.model(Tensor(batch.shadow), Tensor(batch.mask))
        parts = self.loss(output, soft, batch.shadow, batch.shadow_free, batch.mask, batch.soft_target)
        parts.total.backward()
        self.optimizer.step()

        self.state.step = t + 1
        self.state.epoch = self.state.step // self.schedule.steps_per_epoch
        record = {'step': float(t), **parts.as_floats(), 'lr': self.optimizer.lr}
        self.history.append(record)
        if t % self.config.train.log_every == 0:
            logger.info(
                'step %d: rem %.4f soft %.4f per %.4f grad %.4f total %.4f lr %.2e',
                t,
                record['rem'],
                record['soft'],
                record['per'],
                record['grad'],
                record['total'],
                record['lr'],
            )
        return record

    def validate(self) -> float:
        '''
        shadow-region lab error of the quantized outputs over the validation set
        '''
        if not len(self.val_set):
            return math.nan
        self.model.eval()
        metrics = MetricAccumulator()
        with no_grad(), grid_policy(self.model, GridPolicy.INTERPOLATE):
            for triplet in self.val_set:
                output, _ = remove_shadow(self.model, triplet.shadow, triplet.mask)
                metrics.add(quantize(output), triplet.shadow_free, triplet.mask)
        self.model.train()
        return metrics.report().rmse_s

    def save(self, name: str = LAST) -> Path:
        self.state.lr = self.optimizer.lr
        self.state.plateau_best = self.plateau.best
        self.state.plateau_bad = self.plateau.bad_epochs
        return save_checkpoint(self.out_dir / name, self.config, self.model, self.optimizer.state, self.state)

    def end_epoch(self) -> float:
        value = self.validate()
        logger.info('epoch %d: validation shadow rmse %.4f', self.state.epoch, value)
        self.optimizer.lr = self.plateau.update(value, self.optimizer.lr)
        if value < self.state.best_val:
            self.state.best_val = value
            path = self.save(BEST)
            logger.info('new best %.4f, saved %s', value, path)
        return value

    def run(self, steps: int | None = None) -> TrainResult:
        '''
        train until the schedule ends, or for `steps` more steps
        '''
        start = self.state.step
        stop = self.schedule.total_steps if steps is None else min(start + steps, self.schedule.total_steps)
        if start == 0:
            params, macs = self.model.complexity(self.config.train.patch_size, self.config.train.patch_size)
            logger.info('model: %d parameters, %.3g MACs per %dpx patch', params, macs, self.config.train.patch_size)

        every = self.config.train.checkpoint_every
        progress = tqdm(range(start, stop), initial=start, total=self.schedule.total_steps, desc='train')
        for _ in progress:
            record = self.step()
            progress.set_postfix(loss=f'{record["total"]:.4f}')
            if self.state.step % self.schedule.steps_per_epoch == 0:
                self.end_epoch()
            if every and self.state.step % every == 0:
                self.save(LAST)
        last = self.save(LAST)
        best = self.out_dir / BEST
        return TrainResult(
            pd.DataFrame(self.history),
            self.state.best_val,
            last,
            best if best.is_file() else None,
        )


def train(config: Config, out_dir: str | os.PathLike[str], resume: str | os.PathLike[str] | None = None) -> TrainResult:
    train_set, val_set = build_datasets(config)
    if resume is not None:
        trainer = Trainer.resume(resume, train_set, val_set, out_dir)
    else:
        trainer = Trainer(config, train_set, val_set, out_dir)
    return trainer.run()


__all__ = [
    'Batch',
    'HeldOut',
    'Schedule',
    'TrainResult',
    'Trainer',
    'batch_plan',
    'build_datasets',
    'make_batch',
    'split_holdout',
    'train',
]
