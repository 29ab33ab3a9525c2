from __future__ import annotations

from collections.abc import Callable
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from cnsnet.core.errors import GradientError
from cnsnet.core.tensor import no_grad
from cnsnet.core.tensor import Tensor

DEFAULT_STEP = 1e-4
DEFAULT_TOLERANCE = 1e-3
DEFAULT_KINK_TOLERANCE = 1e-3
DEFAULT_MIN_CHECKED = 1


@dataclass(frozen=True)
class GradCheckResult:
    '''
    per-input relative errors between tape and central-difference gradients

    the error of one input is max|analytic - numeric| / max(max|numeric|, max|analytic|),
    which stays meaningful when individual entries are close to zero. an input
    with fewer than `min_checked` compared coordinates fails the check
    '''

    errors: tuple[float, ...]
    tolerance: float
    checked_entries: tuple[int, ...] = field(default=())
    skipped_entries: tuple[int, ...] = field(default=())
    min_checked: int = DEFAULT_MIN_CHECKED

    @property
    def max_error(self) -> float:
        return max(self.errors, default=0.0)

    @property
    def passed(self) -> bool:
        return self.enough_checked and self.max_error < self.tolerance

    @property
    def enough_checked(self) -> bool:
        return all(
            checked >= max(1, min(self.min_checked, checked + skipped))
            for checked, skipped in zip(self.checked_entries, self.skipped_entries)
        )


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(numeric), initial=0)), float(np.max(np.abs(analytic), initial=0)))
    diff = float(np.max(np.abs(analytic - numeric), initial=0))
    if scale < 1e-12:
        return diff
    return diff / scale


def check_gradients(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
    kink_tolerance: float | None = DEFAULT_KINK_TOLERANCE,
    min_checked: int = DEFAULT_MIN_CHECKED,
) -> GradCheckResult:
    '''
    compare the tape gradient of the scalar `fn()` with central differences

    `fn` must rebuild its graph from `inputs` on every call; run it under
    `default_dtype(np.float64)` for tight tolerances. with `max_entries`
    only that many randomly chosen coordinates per input are perturbed.

    a coordinate whose forward and backward one-sided differences disagree
    by more than `kink_tolerance` (relative) straddles a non-differentiable
    point and is left out; fewer than `min_checked` compared coordinates on
    any input fail the check
    '''
    for t in inputs:
        if not t.requires_grad:
            raise GradientError('every checked input must require gradients')
        t.zero_grad()
    loss = fn()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    with no_grad():
        base = fn().item()

    rng = rng or np.random.default_rng(0)
    errors: list[float] = []
    counts: list[int] = []
    skipped: list[int] = []
    for t, grad in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        if max_entries is not None and flat.size > max_entries:
            coords = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        else:
            coords = np.arange(flat.size)
        numeric = np.empty(coords.size)
        smooth = np.ones(coords.size, dtype=bool)
        for k, idx in enumerate(coords):
            original = flat[idx]
            buffer = t.data.copy().reshape(-1)
            with no_grad():
                buffer[idx] = original + step
                t.data = buffer.reshape(t.shape)
                plus = fn().item()
                buffer[idx] = original - step
                t.data = buffer.reshape(t.shape)
                minus = fn().item()
                buffer[idx] = original
                t.data = buffer.reshape(t.shape)
            numeric[k] = (plus - minus) / (2 * step)
            if kink_tolerance is not None:
                forward, backward = (plus - base) / step, (base - minus) / step
                scale = max(abs(forward), abs(backward), 1e-8)
                smooth[k] = abs(forward - backward) <= kink_tolerance * scale
        errors.append(_relative_error(grad.reshape(-1)[coords][smooth], numeric[smooth]))
        counts.append(int(smooth.sum()))
        skipped.append(int((~smooth).sum()))
    return GradCheckResult(tuple(errors), tolerance, tuple(counts), tuple(skipped), min_checked)


__all__ = [
    'DEFAULT_KINK_TOLERANCE',
    'DEFAULT_MIN_CHECKED',
    'DEFAULT_STEP',
    'DEFAULT_TOLERANCE',
    'GradCheckResult',
    'check_gradients',
]
