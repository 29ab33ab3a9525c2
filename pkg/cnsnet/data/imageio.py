from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image
from PIL import UnidentifiedImageError

from cnsnet.core.errors import DatasetError
from cnsnet.core.errors import ShapeError

IMAGE_SUFFIXES = ('.png', '.jpg', '.jpeg', '.bmp', '.tif', '.tiff')
MASK_THRESHOLD = 128


def _open(path: str | os.PathLike[str]) -> Image.Image:
    try:
        image = Image.open(path)
        image.load()
    except (OSError, UnidentifiedImageError) as e:
        raise DatasetError(f'cannot read image {path}: {e}') from e
    return image


def read_rgb(path: str | os.PathLike[str]) -> np.ndarray:
    '''
    8-bit image -> float32 [3, H, W] in [0, 1]
    '''
    pixels = np.asarray(_open(path).convert('RGB'), dtype=np.float32)
    return np.ascontiguousarray(pixels.transpose(2, 0, 1) / 255)


def read_mask(path: str | os.PathLike[str]) -> np.ndarray:
    '''
    grayscale mask -> uint8 [H, W] with 1 where the pixel is >= 128
    '''
    pixels = np.asarray(_open(path).convert('L'))
    return (pixels >= MASK_THRESHOLD).astype(np.uint8)


def to_uint8(values: np.ndarray) -> np.ndarray:
    return np.round(np.clip(values, 0, 1) * 255).astype(np.uint8)


def write_rgb(path: str | os.PathLike[str], image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError('write_rgb', 'expects a [3, H, W] image', (image.shape,))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(to_uint8(image.transpose(1, 2, 0)))).save(path)


def write_mask(path: str | os.PathLike[str], mask: np.ndarray) -> None:
    '''
    [H, W] in [0, 1], hard or soft, as an 8-bit grayscale image
    '''
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise ShapeError('write_mask', 'expects an [H, W] mask', (mask.shape,))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(mask)).save(path)


__all__ = [
    'IMAGE_SUFFIXES',
    'read_mask',
    'read_rgb',
    'to_uint8',
    'write_mask',
    'write_rgb',
]
