from __future__ import annotations

import numpy as np

from cnsnet.core.errors import ShapeError
from cnsnet.core.tensor import Tensor

# linear sRGB -> XYZ, D65
SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
# reference white is the image of sRGB white, so (1, 1, 1) lands exactly on L=100, a=b=0
WHITE = SRGB_TO_XYZ.sum(axis=1)

LUMA_601 = np.array([0.299, 0.587, 0.114])

_DELTA = 6 / 29


def as_array(image: Tensor | np.ndarray) -> np.ndarray:
    data = image.numpy() if isinstance(image, Tensor) else image
    return np.asarray(data, dtype=np.float64)


def _channels_first(image: np.ndarray, op: str) -> None:
    if image.ndim < 3 or image.shape[-3] != 3:
        raise ShapeError(op, 'expects 3 colour channels on axis -3', (image.shape,))


def srgb_to_linear(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((np.maximum(c, 0.04045) + 0.055) / 1.055) ** 2.4)


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3 * _DELTA**2) + 4 / 29)


def srgb_to_lab(image: Tensor | np.ndarray) -> np.ndarray:
    '''
    [..., 3, H, W] sRGB in [0, 1] to CIELAB, L in [0, 100]
    values are clamped to [0, 1] first
    '''
    rgb = as_array(image)
    _channels_first(rgb, 'srgb_to_lab')
    linear = srgb_to_linear(np.clip(rgb, 0, 1))
    xyz = np.einsum('ij,...jhw->...ihw', SRGB_TO_XYZ, linear)
    f = _lab_f(xyz / WHITE.reshape(3, 1, 1))
    fx, fy, fz = f[..., 0, :, :], f[..., 1, :, :], f[..., 2, :, :]
    lab = np.stack([116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)], axis=-3)
    return lab


def luma(image: Tensor | np.ndarray) -> np.ndarray:
    '''
    ITU-R 601 grayscale of [..., 3, H, W]
    '''
    rgb = as_array(image)
    _channels_first(rgb, 'luma')
    return np.einsum('j,...jhw->...hw', LUMA_601, rgb)


def quantize(image: Tensor | np.ndarray) -> np.ndarray:
    '''
    round trip through 8 bit
    '''
    return np.round(np.clip(as_array(image), 0, 1) * 255) / 255


__all__ = [
    'LUMA_601',
    'SRGB_TO_XYZ',
    'WHITE',
    'as_array',
    'luma',
    'quantize',
    'srgb_to_lab',
    'srgb_to_linear',
]
