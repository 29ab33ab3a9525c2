from __future__ import annotations

import os
from abc import ABCMeta
from abc import abstractmethod
from collections.abc import Iterator
from dataclasses import dataclass
from logging import getLogger
from pathlib import Path
from typing import Literal

from tqdm import tqdm

from cnsnet.config import SynthSpec
from cnsnet.core.errors import DatasetError
from cnsnet.data.imageio import IMAGE_SUFFIXES
from cnsnet.data.imageio import read_mask
from cnsnet.data.imageio import read_rgb
from cnsnet.data.imageio import write_mask
from cnsnet.data.imageio import write_rgb
from cnsnet.data.synthetic import synth_triplet
from cnsnet.data.triplet import ImageTriplet

logger = getLogger(__name__)

Split = Literal['train', 'test']
Stream = Literal['train', 'val', 'test']

_STREAMS: dict[str, int] = {'train': 0, 'val': 1, 'test': 2}


class TripletDataset(metaclass=ABCMeta):
    @property
    @abstractmethod
    def ids(self) -> list[str]:
        ...

    @abstractmethod
    def get(self, index: int) -> ImageTriplet:
        ...

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, index: int) -> ImageTriplet:
        if not -len(self) <= index < len(self):
            raise IndexError(index)
        return self.get(index % len(self))

    def __iter__(self) -> Iterator[ImageTriplet]:
        for i in range(len(self)):
            yield self.get(i)


@dataclass(frozen=True)
class TripletFiles:
    id: str
    shadow: Path
    mask: Path
    shadow_free: Path


def _images(folder: Path) -> dict[str, Path]:
    return {p.stem: p for p in sorted(folder.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def _layout(root: Path, split: str) -> tuple[Path, Path, Path] | None:
    '''
    (shadow, mask, free) folders, ISTD naming first then the generic names
    '''
    candidates = []
    for base in (root / split, root):
        candidates.append((base / f'{split}_A', base / f'{split}_B', base / f'{split}_C'))
        candidates.append((base / 'shadow', base / 'mask', base / 'free'))
    for folders in candidates:
        if all(f.is_dir() for f in folders):
            return folders
    return None


def index_triplets(root: str | os.PathLike[str], split: str) -> list[TripletFiles]:
    '''
    match the three folders by file stem, lexicographic by id; ids missing a
    counterpart are skipped with a warning
    '''
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f'dataset root {root} does not exist')
    folders = _layout(root, split)
    if folders is None:
        raise DatasetError(f'no `{split}_A/{split}_B/{split}_C` or `shadow/mask/free` folders under {root}')
    shadow, mask, free = (_images(f) for f in folders)

    found = []
    for id in sorted(set(shadow) | set(mask) | set(free)):
        missing = [name for name, files in (('shadow', shadow), ('mask', mask), ('free', free)) if id not in files]
        if missing:
            logger.warning('%s: `%s` has no %s image, skipped', root, id, '/'.join(missing))
            continue
        found.append(TripletFiles(id, shadow[id], mask[id], free[id]))
    if not found:
        raise DatasetError(f'no complete triplets in {root} ({split})')
    logger.info('%s (%s): %d triplets', root, split, len(found))
    return found


class IstdDataset(TripletDataset):
    '''
    triplets read lazily from an ISTD-style folder tree
    '''

    def __init__(self, root: str | os.PathLike[str], split: Split = 'test') -> None:
        self.root = Path(root)
        self.split = split
        self.files = index_triplets(root, split)

    @property
    def ids(self) -> list[str]:
        return [f.id for f in self.files]

    def get(self, index: int) -> ImageTriplet:
        f = self.files[index]
        return ImageTriplet(read_rgb(f.shadow), read_mask(f.mask), read_rgb(f.shadow_free), f.id)


def load_istd(root: str | os.PathLike[str], split: Split = 'test') -> IstdDataset:
    return IstdDataset(root, split)


class SyntheticDataset(TripletDataset):
    '''
    `count` procedural triplets, triplet i is seeded by (seed, stream, i) so
    the train, val and test streams never share a scene
    '''

    def __init__(self, spec: SynthSpec, count: int, seed: int = 0, stream: Stream = 'train') -> None:
        if count < 1:
            raise DatasetError('synthetic dataset needs at least one triplet')
        spec.validate()
        self.spec = spec
        self.count = count
        self.seed = seed
        self.stream = stream

    @property
    def ids(self) -> list[str]:
        return [self._id(i) for i in range(self.count)]

    def _id(self, index: int) -> str:
        return f'{self.stream}-{index:05d}'

    def get(self, index: int) -> ImageTriplet:
        return synth_triplet(self.spec, (self.seed, _STREAMS[self.stream], index), id=self._id(index))


def materialize(dataset: TripletDataset, out: str | os.PathLike[str], split: str) -> Path:
    '''
    write a dataset as `out/split/split_{A,B,C}/<id>.png`
    '''
    base = Path(out) / split
    for triplet in tqdm(dataset, total=len(dataset), desc=f'writing {split}'):
        write_rgb(base / f'{split}_A' / f'{triplet.id}.png', triplet.shadow)
        write_mask(base / f'{split}_B' / f'{triplet.id}.png', triplet.mask)
        write_rgb(base / f'{split}_C' / f'{triplet.id}.png', triplet.shadow_free)
    logger.info('wrote %d triplets to %s', len(dataset), base)
    return base


__all__ = [
    'IstdDataset',
    'SyntheticDataset',
    'TripletDataset',
    'TripletFiles',
    'index_triplets',
    'load_istd',
    'materialize',
]
