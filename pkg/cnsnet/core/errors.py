from __future__ import annotations

from collections.abc import Sequence


class CNSNetError(Exception):
    ...


class ShapeError(CNSNetError, ValueError):
    _op: str
    _shapes: tuple[tuple[int, ...], ...]

    def __init__(
        self, op: str, message: str, shapes: Sequence[tuple[int, ...]] = ()
    ) -> None:
        detail = ', '.join(str(tuple(s)) for s in shapes)
        super().__init__(f'{op}: {message}' + (f' (shapes: {detail})' if detail else ''))
        self._op = op
        self._shapes = tuple(tuple(s) for s in shapes)

    @property
    def op(self) -> str:
        return self._op

    @property
    def shapes(self) -> tuple[tuple[int, ...], ...]:
        return self._shapes


class GridMismatch(ShapeError):
    def __init__(self, expected: tuple[int, int], got: tuple[int, int]) -> None:
        super().__init__(
            'add_positional',
            f'token grid {got[0]}x{got[1]} differs from the build-time grid '
            f'{expected[0]}x{expected[1]}',
        )


class NonFiniteError(CNSNetError, FloatingPointError):
    _op: str

    def __init__(self, op: str) -> None:
        super().__init__(f'{op} produced non-finite values')
        self._op = op

    @property
    def op(self) -> str:
        return self._op


class GradientError(CNSNetError):
    ...


class NonFiniteGradient(CNSNetError):
    _parameter: str

    def __init__(self, parameter: str) -> None:
        super().__init__(f'gradient of parameter `{parameter}` is not finite')
        self._parameter = parameter

    @property
    def parameter(self) -> str:
        return self._parameter


class DatasetError(CNSNetError):
    ...


class ArchiveError(CNSNetError):
    ...


class CheckpointMismatch(CNSNetError):
    _missing: tuple[str, ...]
    _unexpected: tuple[str, ...]

    def __init__(
        self,
        message: str,
        missing: Sequence[str] = (),
        unexpected: Sequence[str] = (),
    ) -> None:
        parts = [message]
        if missing:
            parts.append(f'missing: {", ".join(missing)}')
        if unexpected:
            parts.append(f'unexpected: {", ".join(unexpected)}')
        super().__init__('; '.join(parts))
        self._missing = tuple(missing)
        self._unexpected = tuple(unexpected)

    @property
    def missing(self) -> tuple[str, ...]:
        return self._missing

    @property
    def unexpected(self) -> tuple[str, ...]:
        return self._unexpected


class ConfigError(CNSNetError, ValueError):
    ...


__all__ = [
    'ArchiveError',
    'CNSNetError',
    'CheckpointMismatch',
    'ConfigError',
    'DatasetError',
    'GradientError',
    'GridMismatch',
    'NonFiniteError',
    'NonFiniteGradient',
    'ShapeError',
]
