from __future__ import annotations

from functools import lru_cache
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from cnsnet.core.errors import ShapeError
from cnsnet.core.profile import record_macs
from cnsnet.core.tensor import expand
from cnsnet.core.tensor import getitem
from cnsnet.core.tensor import mean
from cnsnet.core.tensor import sqrt
from cnsnet.core.tensor import Tensor
from cnsnet.core.tensor import var


LEAKY_SLOPE = 0.2

InterpolationMode = Literal['nearest', 'bilinear']


# convolution


def _conv2d_grad_input(
    g: np.ndarray,
    weight: np.ndarray,
    padded_shape: tuple[int, ...],
    stride: int,
    padding: int,
) -> np.ndarray:
    _, _, kh, kw = weight.shape
    _, _, ho, wo = g.shape
    dxp = np.zeros(padded_shape, dtype=g.dtype)
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(g, weight[:, :, i, j], axes=([1], [0]))  # N,Ho,Wo,C
            dxp[
                :,
                :,
                i : i + stride * (ho - 1) + 1 : stride,
                j : j + stride * (wo - 1) + 1 : stride,
            ] += contrib.transpose(0, 3, 1, 2)
    h, w = padded_shape[2] - 2 * padding, padded_shape[3] - 2 * padding
    return dxp[:, :, padding : padding + h, padding : padding + w]


def _conv2d_grad_weight(g: np.ndarray, cols: np.ndarray) -> np.ndarray:
    # g: N,Co,Ho,Wo  cols: N,C,Ho,Wo,kh,kw
    return np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    '''
    cross-correlation of x[N,C,H,W] with weight[Co,C,kh,kw], zero padding
    '''
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError('conv2d', 'expects 4-d input and weight', (x.shape, weight.shape))
    n, c, h, w = x.shape
    co, ci, kh, kw = weight.shape
    if c != ci:
        raise ShapeError('conv2d', f'input has {c} channels, weight expects {ci}', (x.shape, weight.shape))
    if bias is not None and bias.shape != (co,):
        raise ShapeError('conv2d', f'bias must have shape ({co},)', (bias.shape,))
    if stride < 1:
        raise ShapeError('conv2d', f'stride must be >= 1, got {stride}')
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise ShapeError('conv2d', f'{kh}x{kw} kernel does not fit the padded {hp}x{wp} input', (x.shape, weight.shape))

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(cols, weight.data, axes=([1, 4, 5], [1, 2, 3]))  # N,Ho,Wo,Co
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    record_macs('conv2d', out.size * ci * kh * kw)
    if bias is not None:
        out += bias.data.reshape(1, co, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        gx = _conv2d_grad_input(g, weight.data, xp.shape, stride, padding) if x.requires_grad else None
        gw = _conv2d_grad_weight(g, cols) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return Tensor._from_op('conv2d', out, parents, backward)


# nonlinearities


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    positive = x.data > 0
    data = np.where(positive, x.data, slope * x.data).astype(x.dtype, copy=False)
    return Tensor._from_op(
        'leaky_relu',
        data,
        (x,),
        lambda g: (np.where(positive, g, slope * g).astype(g.dtype, copy=False),),
    )


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    z = np.exp(-np.abs(x.data))
    data = np.where(x.data >= 0, 1 / (1 + z), z / (1 + z)).astype(x.dtype, copy=False)
    return Tensor._from_op('sigmoid', data, (x,), lambda g: (g * data * (1 - data),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (data * (g - np.sum(g * data, axis=axis, keepdims=True)),)

    return Tensor._from_op('softmax', data, (x,), backward)


# affine maps


def channel_affine(
    x: Tensor,
    scale: Tensor | None = None,
    shift: Tensor | None = None,
    axis: int = 1,
) -> Tensor:
    '''
    per-channel x * scale[c] + shift[c] along `axis`
    '''
    ax = axis % x.ndim
    channels = x.shape[ax]
    view = [1] * x.ndim
    view[ax] = channels
    for name, p in (('scale', scale), ('shift', shift)):
        if p is not None and p.shape != (channels,):
            raise ShapeError('channel_affine', f'{name} must have shape ({channels},)', (x.shape, p.shape))
    reduce_axes = tuple(i for i in range(x.ndim) if i != ax)
    s = scale.data.reshape(view) if scale is not None else None
    data = x.data * s if s is not None else x.data.copy()
    if shift is not None:
        data = data + shift.data.reshape(view)
    parents = tuple(p for p in (x, scale, shift) if p is not None)

    def backward(g: np.ndarray) -> list[np.ndarray]:
        grads = [g * s if s is not None else g]
        if scale is not None:
            grads.append(np.sum(g * x.data, axis=reduce_axes))
        if shift is not None:
            grads.append(np.sum(g, axis=reduce_axes))
        return grads

    return Tensor._from_op('channel_affine', data, parents, backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    '''
    x[..., in] @ weight[in, out] (+ bias[out])
    '''
    out = x @ weight
    if bias is not None:
        out = channel_affine(out, shift=bias, axis=-1)
    return out


# normalisation helpers


def standardize(x: Tensor, axes: tuple[int, ...], eps: float) -> Tensor:
    '''
    (x - mean) / sqrt(var + eps) over `axes`, statistics stay on the tape
    '''
    mu = mean(x, axis=axes, keepdims=True)
    sigma = sqrt(var(x, axis=axes, keepdims=True) + eps)
    return (x - expand(mu, x.shape)) / expand(sigma, x.shape)


def layer_norm(
    x: Tensor, weight: Tensor | None, bias: Tensor | None, eps: float = 1e-5
) -> Tensor:
    return channel_affine(standardize(x, (x.ndim - 1,), eps), weight, bias, axis=-1)


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    '''
    per-sample per-channel standardization over the spatial axes, no affine
    '''
    return standardize(x, (2, 3), eps)


# resampling


@lru_cache(maxsize=64)
def _bilinear_matrix(size_in: int, size_out: int) -> np.ndarray:
    # half-pixel centres, edges clamped
    scale = size_in / size_out
    src = (np.arange(size_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0, size_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, size_in - 1)
    frac = src - lo
    m = np.zeros((size_out, size_in))
    m[np.arange(size_out), lo] += 1 - frac
    m[np.arange(size_out), hi] += frac
    m.setflags(write=False)
    return m


def _nearest_index(size_in: int, size_out: int) -> np.ndarray:
    return np.floor(np.arange(size_out) * (size_in / size_out)).astype(int)


def interpolate(x: Tensor, size: tuple[int, int], mode: InterpolationMode = 'nearest') -> Tensor:
    '''
    resample the last two axes of x to `size`
    '''
    if x.ndim < 2:
        raise ShapeError('interpolate', 'needs at least two axes', (x.shape,))
    oh, ow = size
    if oh < 1 or ow < 1:
        raise ShapeError('interpolate', f'target size must be positive, got {size}')
    h, w = x.shape[-2:]
    if (oh, ow) == (h, w):
        return x
    if mode == 'nearest':
        rows = _nearest_index(h, oh)[:, None]
        cols = _nearest_index(w, ow)[None, :]
        return getitem(x, (Ellipsis, rows, cols))
    if mode != 'bilinear':
        raise ValueError(f'unknown interpolation mode {mode}')

    mh = _bilinear_matrix(h, oh).astype(x.dtype)
    mw = _bilinear_matrix(w, ow).astype(x.dtype)
    data = mh @ x.data @ mw.T
    return Tensor._from_op('bilinear', data, (x,), lambda g: (mh.T @ g @ mw,))


def upsample2x(x: Tensor, mode: InterpolationMode = 'bilinear') -> Tensor:
    h, w = x.shape[-2:]
    return interpolate(x, (2 * h, 2 * w), mode)


def downsample2x(x: Tensor) -> Tensor:
    '''
    keep every second row and column, starting at the top-left pixel
    '''
    return getitem(x, (Ellipsis, slice(None, None, 2), slice(None, None, 2)))


def laplacian(x: Tensor) -> Tensor:
    '''
    5-point laplacian of every channel of x[N,C,H,W], zero padded
    '''
    n, c, h, w = x.shape
    kernel = Tensor(
        np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]]).reshape(1, 1, 3, 3),
        dtype=x.dtype.type,
    )
    flat = x.reshape(n * c, 1, h, w)
    return conv2d(flat, kernel, padding=1).reshape(n, c, h, w)


__all__ = [
    'LEAKY_SLOPE',
    'channel_affine',
    'conv2d',
    'downsample2x',
    'instance_norm',
    'interpolate',
    'laplacian',
    'layer_norm',
    'leaky_relu',
    'linear',
    'sigmoid',
    'softmax',
    'standardize',
    'upsample2x',
]
