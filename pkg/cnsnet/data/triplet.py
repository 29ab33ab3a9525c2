from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cnsnet.core.errors import ShapeError


@dataclass(frozen=True)
class ImageTriplet:
    '''
    shadow and shadow-free float32 [3, H, W] in [0, 1], binary uint8 mask [H, W]
    '''

    shadow: np.ndarray
    mask: np.ndarray
    shadow_free: np.ndarray
    id: str

    def __post_init__(self) -> None:
        shapes = (self.shadow.shape, self.mask.shape, self.shadow_free.shape)
        if self.shadow.ndim != 3 or self.shadow.shape[0] != 3:
            raise ShapeError('ImageTriplet', 'shadow must be [3, H, W]', shapes)
        if self.shadow_free.shape != self.shadow.shape or self.mask.shape != self.shadow.shape[1:]:
            raise ShapeError('ImageTriplet', f'misaligned triplet {self.id}', shapes)

    @property
    def size(self) -> tuple[int, int]:
        return self.mask.shape[0], self.mask.shape[1]

    def with_arrays(self, shadow: np.ndarray, mask: np.ndarray, shadow_free: np.ndarray) -> ImageTriplet:
        return ImageTriplet(shadow, mask, shadow_free, self.id)


def stack_triplets(triplets: list[ImageTriplet]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    '''
    batch arrays: shadow [N, 3, H, W], mask [N, 1, H, W] float, shadow-free [N, 3, H, W]
    '''
    if not triplets:
        raise ValueError('cannot stack an empty batch')
    shadow = np.stack([t.shadow for t in triplets])
    mask = np.stack([t.mask[None] for t in triplets]).astype(shadow.dtype)
    free = np.stack([t.shadow_free for t in triplets])
    return shadow, mask, free


__all__ = [
    'ImageTriplet',
    'stack_triplets',
]
