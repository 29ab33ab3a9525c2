from __future__ import annotations

from typing import overload

import numpy as np
from scipy.ndimage import maximum_filter

from cnsnet.core import functional as F
from cnsnet.core.errors import ShapeError
from cnsnet.core.tensor import absolute
from cnsnet.core.tensor import mean
from cnsnet.core.tensor import Tensor
from cnsnet.metrics.colorspace import as_array


def soft_mask_target(shadow: Tensor | np.ndarray, shadow_free: Tensor | np.ndarray) -> np.ndarray:
    '''
    mean over channels of |minmax(shadow_c - free_c)|, min/max per channel and image

    accepts [3, H, W] or [N, 3, H, W] and returns [H, W] or [N, 1, H, W]
    a channel whose difference is constant contributes zeros
    '''
    s, f = as_array(shadow), as_array(shadow_free)
    if s.shape != f.shape or s.ndim not in (3, 4) or s.shape[-3] != 3:
        raise ShapeError('soft_mask_target', 'expects two aligned [..., 3, H, W] images', (s.shape, f.shape))
    d = s - f
    lo = d.min(axis=(-2, -1), keepdims=True)
    hi = d.max(axis=(-2, -1), keepdims=True)
    span = hi - lo
    normed = np.divide(d - lo, span, out=np.zeros_like(d), where=span > 0)
    soft = np.abs(normed).mean(axis=-3, keepdims=s.ndim == 4)
    return np.clip(soft, 0, 1)


def soft_mask_loss(pred: Tensor, target: Tensor | np.ndarray) -> Tensor:
    '''
    mean absolute difference
    '''
    t = target if isinstance(target, Tensor) else Tensor(target, dtype=pred.dtype.type)
    if t.shape != pred.shape:
        raise ShapeError('soft_mask_loss', 'prediction and target differ in shape', (pred.shape, t.shape))
    return mean(absolute(pred - t))


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    '''
    binary dilation of the last two axes by a (2r+1)x(2r+1) square
    '''
    if radius < 0:
        raise ValueError(f'dilation radius must be >= 0, got {radius}')
    m = np.asarray(mask)
    if radius == 0:
        return m.copy()
    size = (1,) * (m.ndim - 2) + (2 * radius + 1, 2 * radius + 1)
    return maximum_filter(m, size=size, mode='constant', cval=0)


@overload
def resize_mask(mask: Tensor, height: int, width: int, mode: F.InterpolationMode = ...) -> Tensor:
    ...


@overload
def resize_mask(mask: np.ndarray, height: int, width: int, mode: F.InterpolationMode = ...) -> np.ndarray:
    ...


def resize_mask(
    mask: Tensor | np.ndarray, height: int, width: int, mode: F.InterpolationMode = 'nearest'
) -> Tensor | np.ndarray:
    '''
    nearest keeps hard masks binary, bilinear is for soft masks
    '''
    if isinstance(mask, Tensor):
        return F.interpolate(mask, (height, width), mode)
    m = np.asarray(mask)
    out = F.interpolate(Tensor(m, dtype=m.dtype.type if m.dtype.kind == 'f' else None), (height, width), mode)
    return out.numpy().astype(m.dtype, copy=False) if mode == 'nearest' else out.numpy()


def complement(mask: Tensor) -> Tensor:
    return 1.0 - mask


__all__ = [
    'complement',
    'dilate',
    'resize_mask',
    'soft_mask_loss',
    'soft_mask_target',
]
