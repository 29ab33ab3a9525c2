from __future__ import annotations

from collections.abc import Generator
from contextlib import contextmanager


class MacCounter:
    '''
    multiply-accumulate tally of the conv and matmul calls made while active
    '''

    _total: int
    _by_op: dict[str, int]

    def __init__(self) -> None:
        self._total = 0
        self._by_op = {}

    @property
    def total(self) -> int:
        return self._total

    @property
    def by_op(self) -> dict[str, int]:
        return dict(self._by_op)

    def add(self, op: str, macs: int) -> None:
        self._total += macs
        self._by_op[op] = self._by_op.get(op, 0) + macs


_ACTIVE: MacCounter | None = None


@contextmanager
def count_macs() -> Generator[MacCounter, None, None]:
    global _ACTIVE
    if _ACTIVE is not None:
        raise RuntimeError('mac counting already active')
    counter = MacCounter()
    _ACTIVE = counter
    try:
        yield counter
    finally:
        _ACTIVE = None


def record_macs(op: str, macs: int) -> None:
    if _ACTIVE is not None:
        _ACTIVE.add(op, int(macs))


__all__ = [
    'MacCounter',
    'count_macs',
    'record_macs',
]
