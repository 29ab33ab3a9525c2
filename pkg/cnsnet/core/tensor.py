from __future__ import annotations

from collections.abc import Callable
from collections.abc import Generator
from collections.abc import Sequence
from contextlib import contextmanager
from typing import Any
from typing import TypeAlias
from typing import Union

import numpy as np

from cnsnet.core.errors import GradientError
from cnsnet.core.errors import NonFiniteError
from cnsnet.core.errors import ShapeError
from cnsnet.core.profile import record_macs


Scalar: TypeAlias = Union[int, float, np.floating]
Axes: TypeAlias = Union[int, Sequence[int], None]
BackwardFn: TypeAlias = Callable[[np.ndarray], Sequence[Union[np.ndarray, None]]]

_FLOAT_DTYPES = (np.float32, np.float64)
_DEFAULT_DTYPE: type[np.floating] = np.float32
_GRAD_ENABLED = True


@contextmanager
def default_dtype(dtype: type[np.floating]) -> Generator[None, None, None]:
    '''
    switch the dtype new tensors are created with
    64-bit is used for gradient checks, training runs in 32-bit
    '''
    global _DEFAULT_DTYPE
    if dtype not in _FLOAT_DTYPES:
        raise TypeError(f'unsupported dtype {dtype}')
    previous = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = dtype
    try:
        yield
    finally:
        _DEFAULT_DTYPE = previous


def get_default_dtype() -> type[np.floating]:
    return _DEFAULT_DTYPE


@contextmanager
def no_grad() -> Generator[None, None, None]:
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class _Node:
    '''
    one executed differentiable operation: its inputs and the vector-jacobian product
    '''

    __slots__ = ('op', 'parents', 'backward')

    def __init__(self, op: str, parents: tuple[Tensor, ...], backward: BackwardFn) -> None:
        self.op = op
        self.parents = parents
        self.backward = backward


class Tensor:
    '''
    dense real array taking part in reverse-mode differentiation
    '''

    _data: np.ndarray
    _grad: np.ndarray | None
    _requires_grad: bool
    _node: _Node | None

    # numpy defers to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        dtype: type[np.floating] | None = None,
    ) -> None:
        self._data = np.ascontiguousarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self._grad = None
        self._requires_grad = requires_grad
        self._node = None

    @classmethod
    def _from_op(
        cls,
        op: str,
        data: np.ndarray,
        parents: Sequence[Tensor],
        backward: BackwardFn,
    ) -> Tensor:
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(op)
        out = cls.__new__(cls)
        out._data = data
        out._grad = None
        out._node = None
        out._requires_grad = False
        if _GRAD_ENABLED and any(p._requires_grad for p in parents):
            out._requires_grad = True
            out._node = _Node(op, tuple(parents), backward)
        return out

    # properties

    @property
    def data(self) -> np.ndarray:
        return self._data

    @data.setter
    def data(self, value: np.ndarray) -> None:
        if value.shape != self._data.shape:
            raise ShapeError('data', 'assignment must keep the shape', (self.shape, value.shape))
        self._data = np.ascontiguousarray(value, dtype=self._data.dtype)

    @property
    def grad(self) -> np.ndarray | None:
        return self._grad

    @grad.setter
    def grad(self, value: np.ndarray | None) -> None:
        if value is not None and value.shape != self._data.shape:
            raise ShapeError('grad', 'gradient must match the data shape', (self.shape, value.shape))
        self._grad = value

    @property
    def requires_grad(self) -> bool:
        return self._requires_grad

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    @property
    def op(self) -> str | None:
        return None if self._node is None else self._node.op

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self._data.shape)

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    @property
    def dtype(self) -> np.dtype:
        return self._data.dtype

    def numpy(self) -> np.ndarray:
        return self._data

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError('item', 'only single-element tensors convert to a float', (self.shape,))
        return float(self._data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self._data, dtype=self._data.dtype.type)

    def zero_grad(self) -> None:
        self._grad = None

    def backward(self) -> None:
        '''
        replay the tape recorded under this scalar and accumulate leaf gradients
        '''
        if self.size != 1:
            raise GradientError(f'backward needs a scalar loss, got shape {self.shape}')
        if not self._requires_grad:
            raise GradientError('loss is not on the gradient tape')
        GradTape.record(self).replay(np.ones_like(self._data))

    # arithmetic

    def __add__(self, other: Tensor | Scalar) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Scalar) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Tensor | Scalar) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Scalar) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Tensor | Scalar) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Scalar) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Tensor | Scalar) -> Tensor:
        return div(self, other)

    def __rtruediv__(self, other: Scalar) -> Tensor:
        return div(other, self)

    def __neg__(self) -> Tensor:
        return neg(self)

    def __pow__(self, exponent: Scalar) -> Tensor:
        return power(self, exponent)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        return getitem(self, index)

    def sum(self, axis: Axes = None, keepdims: bool = False) -> Tensor:
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Axes = None, keepdims: bool = False) -> Tensor:
        return mean(self, axis=axis, keepdims=keepdims)

    def var(self, axis: Axes = None, keepdims: bool = False) -> Tensor:
        return var(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int | Sequence[int]) -> Tensor:
        if len(shape) == 1 and not isinstance(shape[0], int):
            return reshape(self, tuple(shape[0]))
        return reshape(self, tuple(shape))  # type: ignore[arg-type]

    def transpose(self, *axes: int) -> Tensor:
        return transpose(self, axes or None)

    def expand(self, *shape: int) -> Tensor:
        return expand(self, shape)

    def sqrt(self) -> Tensor:
        return sqrt(self)

    def abs(self) -> Tensor:
        return absolute(self)

    def exp(self) -> Tensor:
        return exp(self)

    def log(self) -> Tensor:
        return log(self)

    def __repr__(self) -> str:
        grad = ', requires_grad=True' if self._requires_grad else ''
        op = f', op={self.op}' if self.op else ''
        return f'Tensor(shape={self.shape}, dtype={self.dtype}{grad}{op})'

    def __len__(self) -> int:
        return self.shape[0]


class GradTape:
    '''
    ordered record of the operations between the leaves and a root tensor
    entries are in execution order, replay walks them backwards
    '''

    _entries: list[Tensor]
    _root: Tensor

    def __init__(self, root: Tensor, entries: list[Tensor]) -> None:
        self._root = root
        self._entries = entries

    @classmethod
    def record(cls, root: Tensor) -> GradTape:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor._node is not None:
                for parent in tensor._node.parents:
                    if parent._requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(root, order)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def ops(self) -> list[str]:
        return [t.op for t in self._entries if t.op is not None]

    @property
    def leaves(self) -> list[Tensor]:
        return [t for t in self._entries if t.is_leaf]

    def replay(self, seed: np.ndarray) -> None:
        pending: dict[int, np.ndarray] = {id(self._root): seed}
        for tensor in reversed(self._entries):
            grad = pending.pop(id(tensor), None)
            if grad is None:
                continue
            node = tensor._node
            if node is None:
                # leaf: every path has been summed by now, write once
                tensor._grad = grad if tensor._grad is None else tensor._grad + grad
                continue
            parent_grads = node.backward(grad)
            for parent, parent_grad in zip(node.parents, parent_grads):
                if parent_grad is None or not parent._requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad


def as_tensor(value: Tensor | Scalar | np.ndarray, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype.type if like is not None else None
    return Tensor(np.asarray(value), dtype=dtype)


# elementwise


def _pair(a: Tensor | Scalar, b: Tensor | Scalar, op: str) -> tuple[Tensor, Tensor]:
    like = a if isinstance(a, Tensor) else b if isinstance(b, Tensor) else None
    ta, tb = as_tensor(a, like), as_tensor(b, like)
    if ta.shape != tb.shape and ta.size != 1 and tb.size != 1:
        raise ShapeError(op, 'operands must share a shape or one must be a scalar', (ta.shape, tb.shape))
    return ta, tb


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


def _out_shape(a: Tensor, b: Tensor) -> tuple[int, ...]:
    return a.shape if a.size >= b.size else b.shape


def add(a: Tensor | Scalar, b: Tensor | Scalar) -> Tensor:
    ta, tb = _pair(a, b, 'add')
    data = (ta.data + tb.data).reshape(_out_shape(ta, tb))

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _reduce_to(g, ta.shape), _reduce_to(g, tb.shape)

    return Tensor._from_op('add', data, (ta, tb), backward)


def sub(a: Tensor | Scalar, b: Tensor | Scalar) -> Tensor:
    ta, tb = _pair(a, b, 'sub')
    data = (ta.data - tb.data).reshape(_out_shape(ta, tb))

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _reduce_to(g, ta.shape), _reduce_to(-g, tb.shape)

    return Tensor._from_op('sub', data, (ta, tb), backward)


def mul(a: Tensor | Scalar, b: Tensor | Scalar) -> Tensor:
    ta, tb = _pair(a, b, 'mul')
    data = (ta.data * tb.data).reshape(_out_shape(ta, tb))

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _reduce_to(g * tb.data, ta.shape), _reduce_to(g * ta.data, tb.shape)

    return Tensor._from_op('mul', data, (ta, tb), backward)


def div(a: Tensor | Scalar, b: Tensor | Scalar) -> Tensor:
    ta, tb = _pair(a, b, 'div')
    data = (ta.data / tb.data).reshape(_out_shape(ta, tb))

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ga = g / tb.data
        gb = -g * ta.data / (tb.data * tb.data)
        return _reduce_to(ga, ta.shape), _reduce_to(gb, tb.shape)

    return Tensor._from_op('div', data, (ta, tb), backward)


def neg(x: Tensor) -> Tensor:
    return Tensor._from_op('neg', -x.data, (x,), lambda g: (-g,))


def power(x: Tensor, exponent: Scalar) -> Tensor:
    p = float(exponent)
    data = x.data**p

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * p * x.data ** (p - 1),)

    return Tensor._from_op('pow', data.astype(x.dtype, copy=False), (x,), backward)


def sqrt(x: Tensor) -> Tensor:
    data = np.sqrt(x.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        # zero subgradient at the origin
        safe = np.where(data > 0, data, 1)
        return (np.where(data > 0, g * 0.5 / safe, 0).astype(x.dtype, copy=False),)

    return Tensor._from_op('sqrt', data, (x,), backward)


def exp(x: Tensor) -> Tensor:
    data = np.exp(x.data)
    return Tensor._from_op('exp', data, (x,), lambda g: (g * data,))


def log(x: Tensor) -> Tensor:
    return Tensor._from_op('log', np.log(x.data), (x,), lambda g: (g / x.data,))


def absolute(x: Tensor) -> Tensor:
    return Tensor._from_op('abs', np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


# reductions


def _norm_axes(axis: Axes, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def _count(shape: tuple[int, ...], axes: tuple[int, ...]) -> int:
    return int(np.prod([shape[a] for a in axes])) if axes else 1


def tsum(x: Tensor, axis: Axes = None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    data = np.sum(x.data, axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        g = g if keepdims else np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._from_op('sum', np.asarray(data), (x,), backward)


def mean(x: Tensor, axis: Axes = None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    n = _count(x.shape, axes)
    data = np.mean(x.data, axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        g = g if keepdims else np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return Tensor._from_op('mean', np.asarray(data, dtype=x.dtype), (x,), backward)


def var(x: Tensor, axis: Axes = None, keepdims: bool = False) -> Tensor:
    '''
    population variance (divides by the element count)
    '''
    axes = _norm_axes(axis, x.ndim)
    n = _count(x.shape, axes)
    centered = x.data - np.mean(x.data, axis=axes, keepdims=True)
    data = np.mean(centered * centered, axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        g = g if keepdims else np.expand_dims(g, axes)
        return ((2.0 / n) * centered * g,)

    return Tensor._from_op('var', np.asarray(data, dtype=x.dtype), (x,), backward)


# shape manipulation


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = x.data.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeError('reshape', str(e), (x.shape, tuple(shape))) from e
    return Tensor._from_op('reshape', data, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    perm = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    if sorted(perm) != list(range(x.ndim)):
        raise ShapeError('transpose', f'{perm} is not a permutation', (x.shape,))
    inverse = tuple(np.argsort(perm))
    data = np.ascontiguousarray(np.transpose(x.data, perm))
    return Tensor._from_op('transpose', data, (x,), lambda g: (np.transpose(g, inverse),))


def expand(x: Tensor, shape: Sequence[int]) -> Tensor:
    '''
    explicit broadcast, size-1 axes (and missing leading axes) are repeated
    '''
    target = tuple(shape)
    lead = len(target) - x.ndim
    if lead < 0 or any(s not in (1, t) for s, t in zip(x.shape, target[lead:])):
        raise ShapeError('expand', 'only size-1 axes can be expanded', (x.shape, target))
    data = np.broadcast_to(x.data, target).copy()
    reduce_axes = tuple(range(lead)) + tuple(
        lead + i for i, s in enumerate(x.shape) if s == 1 and target[lead + i] != 1
    )

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.sum(g, axis=reduce_axes, keepdims=True).reshape(x.shape),)

    return Tensor._from_op('expand', data, (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError('concat', 'needs at least one tensor')
    ax = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
            a != b for i, (a, b) in enumerate(zip(t.shape, tensors[0].shape)) if i != ax
        ):
            raise ShapeError('concat', f'shapes disagree outside axis {ax}', [t.shape for t in tensors])
    data = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return [
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax)
            for i in range(len(tensors))
        ]

    return Tensor._from_op('concat', data, tuple(tensors), backward)


def _is_basic(index: Any) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(p is None or p is Ellipsis or isinstance(p, (int, slice)) for p in parts)


def getitem(x: Tensor, index: Any) -> Tensor:
    data = np.ascontiguousarray(x.data[index])
    basic = _is_basic(index)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        out = np.zeros_like(x.data)
        if basic:
            out[index] = g
        else:
            np.add.at(out, index, g)
        return (out,)

    return Tensor._from_op('getitem', data, (x,), backward)


def split(x: Tensor, sections: int | Sequence[int], axis: int = 0) -> list[Tensor]:
    '''
    split into `sections` equal parts, or into parts of the given sizes
    '''
    ax = axis % x.ndim
    extent = x.shape[ax]
    if isinstance(sections, int):
        if extent % sections:
            raise ShapeError('split', f'axis of size {extent} is not divisible by {sections}', (x.shape,))
        sizes = [extent // sections] * sections
    else:
        sizes = list(sections)
        if sum(sizes) != extent:
            raise ShapeError('split', f'sizes {sizes} do not add up to {extent}', (x.shape,))
    parts: list[Tensor] = []
    start = 0
    for size in sizes:
        index = tuple(slice(None) for _ in range(ax)) + (slice(start, start + size),)
        parts.append(getitem(x, index))
        start += size
    return parts


def _mask_array(mask: np.ndarray | Tensor, x: Tensor, op: str) -> np.ndarray:
    m = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
    m = m.astype(bool)
    if m.shape != x.shape:
        try:
            m = np.broadcast_to(m, x.shape)
        except ValueError as e:
            raise ShapeError(op, 'mask does not fit the tensor', (x.shape, m.shape)) from e
    return m


def masked_select(x: Tensor, mask: np.ndarray | Tensor) -> Tensor:
    '''
    1-d tensor of the entries where mask is true, in row-major order
    '''
    m = _mask_array(mask, x, 'masked_select')
    data = x.data[m]

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        out = np.zeros_like(x.data)
        out[m] = g
        return (out,)

    return Tensor._from_op('masked_select', data, (x,), backward)


def masked_fill(x: Tensor, mask: np.ndarray | Tensor, value: Scalar) -> Tensor:
    m = _mask_array(mask, x, 'masked_fill')
    data = np.where(m, np.asarray(value, dtype=x.dtype), x.data)
    return Tensor._from_op('masked_fill', data, (x,), lambda g: (np.where(m, 0, g).astype(g.dtype),))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    '''
    (..., n, k) @ (k, m) with a shared right operand, or
    (..., n, k) @ (..., k, m) with identical leading axes
    '''
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError('matmul', 'operands need at least two axes', (a.shape, b.shape))
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError('matmul', 'inner dimensions differ', (a.shape, b.shape))
    shared = b.ndim == 2
    if not shared and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError('matmul', 'leading axes differ', (a.shape, b.shape))
    data = np.matmul(a.data, b.data)
    record_macs('matmul', data.size * a.shape[-1])

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if shared:
            a2 = a.data.reshape(-1, a.shape[-1])
            g2 = g.reshape(-1, g.shape[-1])
            gb = a2.T @ g2
        else:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ga, gb

    return Tensor._from_op('matmul', data, (a, b), backward)


__all__ = [
    'GradTape',
    'Tensor',
    'absolute',
    'add',
    'as_tensor',
    'concat',
    'default_dtype',
    'div',
    'exp',
    'expand',
    'get_default_dtype',
    'getitem',
    'log',
    'masked_fill',
    'masked_select',
    'matmul',
    'mean',
    'mul',
    'neg',
    'no_grad',
    'power',
    'reshape',
    'split',
    'sqrt',
    'stack',
    'sub',
    'transpose',
    'tsum',
    'var',
]
