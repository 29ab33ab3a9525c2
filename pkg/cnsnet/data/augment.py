from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from cnsnet.core.errors import ShapeError
from cnsnet.data.triplet import ImageTriplet


@dataclass(frozen=True)
class AugmentDraw:
    '''
    one geometric transform: rotate by quarter turns, flip, then crop
    '''

    quarter_turns: int = 0
    flip_horizontal: bool = False
    flip_vertical: bool = False
    crop: tuple[int, int, int] | None = None  # (top, left, size)

    @property
    def identity(self) -> bool:
        return not (self.quarter_turns % 4 or self.flip_horizontal or self.flip_vertical or self.crop)


def draw_augmentation(
    rng: np.random.Generator,
    size: tuple[int, int],
    crop_size: int | None = None,
    rotate: bool = True,
    flip: bool = True,
) -> AugmentDraw:
    turns = int(rng.integers(4)) if rotate else 0
    flips = rng.integers(2, size=2) if flip else np.zeros(2, dtype=np.int64)
    crop = None
    if crop_size is not None:
        h, w = (size[1], size[0]) if turns % 2 else size
        if crop_size > min(h, w):
            raise ShapeError('augment', f'crop {crop_size} exceeds image {h}x{w}', (size,))
        crop = (int(rng.integers(h - crop_size + 1)), int(rng.integers(w - crop_size + 1)), crop_size)
    return AugmentDraw(turns, bool(flips[0]), bool(flips[1]), crop)


def apply_draw(array: np.ndarray, draw: AugmentDraw) -> np.ndarray:
    '''
    transform the last two axes, works for images and masks alike
    '''
    out = np.rot90(array, draw.quarter_turns, axes=(-2, -1))
    if draw.flip_horizontal:
        out = out[..., :, ::-1]
    if draw.flip_vertical:
        out = out[..., ::-1, :]
    if draw.crop is not None:
        top, left, size = draw.crop
        if top + size > out.shape[-2] or left + size > out.shape[-1]:
            raise ShapeError('augment', 'crop window leaves the image', (out.shape, draw.crop))
        out = out[..., top : top + size, left : left + size]
    return np.ascontiguousarray(out)


def apply_to_triplet(triplet: ImageTriplet, draw: AugmentDraw) -> ImageTriplet:
    if draw.identity:
        return triplet
    return triplet.with_arrays(
        apply_draw(triplet.shadow, draw),
        apply_draw(triplet.mask, draw),
        apply_draw(triplet.shadow_free, draw),
    )


def augment(
    triplet: ImageTriplet,
    seed: int | Sequence[int],
    crop_size: int | None = None,
    rotate: bool = True,
    flip: bool = True,
) -> ImageTriplet:
    '''
    random quarter-turn rotation, flips and crop, the same transform on all
    three components
    '''
    rng = np.random.default_rng(seed)
    return apply_to_triplet(triplet, draw_augmentation(rng, triplet.size, crop_size, rotate, flip))


__all__ = [
    'AugmentDraw',
    'apply_draw',
    'apply_to_triplet',
    'augment',
    'draw_augmentation',
]
