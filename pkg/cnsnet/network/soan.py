from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from logging import getLogger

import numpy as np

from cnsnet.config import SoanConfig
from cnsnet.config import SoanVariant
from cnsnet.core import functional as F
from cnsnet.core.errors import ShapeError
from cnsnet.core.module import check_shape
from cnsnet.core.module import Module
from cnsnet.core.tensor import concat
from cnsnet.core.tensor import expand
from cnsnet.core.tensor import split
from cnsnet.core.tensor import sqrt
from cnsnet.core.tensor import Tensor
from cnsnet.core.tensor import tsum
from cnsnet.network.layers import BatchNorm2d
from cnsnet.network.layers import Conv2d

logger = getLogger(__name__)


class MaskRegion(str, Enum):
    SHADOW = 'shadow'
    NON_SHADOW = 'non_shadow'


@dataclass(frozen=True)
class RegionStats:
    '''
    per-sample per-channel statistics of a masked pixel set, mean/std are [N, C]
    '''

    mean: Tensor
    std: Tensor
    count: np.ndarray
    epsilon: float

    @property
    def empty(self) -> np.ndarray:
        return self.count == 0


def _stat_shape(shape: tuple[int, ...]) -> tuple[int, int, int, int]:
    return (shape[0], shape[1], 1, 1)


def _region_weights(mask: np.ndarray, region: MaskRegion) -> np.ndarray:
    m = np.asarray(mask)
    return m if region is MaskRegion.SHADOW else 1 - m


def _as_mask(mask: Tensor | np.ndarray, features: Tensor, op: str) -> np.ndarray:
    '''
    binary [N, 1, H, W] float mask in the feature dtype
    '''
    m = mask.numpy() if isinstance(mask, Tensor) else np.asarray(mask)
    n, _, h, w = features.shape
    if m.shape == (h, w):
        m = np.broadcast_to(m, (n, 1, h, w))
    if m.shape != (n, 1, h, w):
        raise ShapeError(op, 'mask must be [H, W] or [N, 1, H, W] at feature resolution', (features.shape, m.shape))
    return (m > 0.5).astype(features.dtype)


def region_stats(
    features: Tensor,
    mask: Tensor | np.ndarray,
    region: MaskRegion,
    epsilon: float = 1e-5,
) -> RegionStats:
    '''
    mean and sqrt(var + epsilon) over the pixels of one region, on the tape

    an empty region reports count 0 with mean 0 and std sqrt(epsilon)
    '''
    check_shape('region_stats', features, 4)
    m = _region_weights(_as_mask(mask, features, 'region_stats'), region)
    count = m.sum(axis=(1, 2, 3))
    weights = Tensor(np.broadcast_to(m, features.shape), dtype=features.dtype.type)
    denom = Tensor(np.maximum(count, 1).reshape(-1, 1, 1, 1), dtype=features.dtype.type)
    full = features.shape

    mu = tsum(features * weights, axis=(2, 3), keepdims=True) / expand(denom, _stat_shape(full))
    centred = (features - expand(mu, full)) * weights
    variance = tsum(centred * centred, axis=(2, 3), keepdims=True) / expand(denom, _stat_shape(full))
    sigma = sqrt(variance + epsilon)
    n, c = full[:2]
    return RegionStats(mu.reshape(n, c), sigma.reshape(n, c), count.astype(np.int64), epsilon)


@dataclass(frozen=True)
class DecompositionResiduals:
    mean: np.ndarray
    variance: np.ndarray

    @property
    def max(self) -> float:
        return float(max(np.max(self.mean, initial=0), np.max(self.variance, initial=0)))


def stats_decomposition_check(features: Tensor | np.ndarray, mask: np.ndarray) -> DecompositionResiduals:
    '''
    residuals of the count-weighted mean and variance identities that tie the
    whole-image moments to the shadow and non-shadow moments (epsilon = 0)
    '''
    x = np.asarray(features.numpy() if isinstance(features, Tensor) else features, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError('stats_decomposition_check', 'expects [N, C, H, W] features', (x.shape,))
    n, c, h, w = x.shape
    m = np.asarray(mask, dtype=np.float64)
    if m.shape == (h, w):
        m = np.broadcast_to(m, (n, 1, h, w))
    total = h * w

    def moments(weight: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = weight.sum(axis=(2, 3))
        safe = np.maximum(k, 1)
        mu = (x * weight).sum(axis=(2, 3)) / safe
        var = (((x - mu[..., None, None]) ** 2) * weight).sum(axis=(2, 3)) / safe
        return k, mu, var

    k_s, mu_s, var_s = moments(m)
    k_ns, mu_ns, var_ns = moments(1 - m)
    mu_t = x.mean(axis=(2, 3))
    var_t = x.var(axis=(2, 3))
    p_s, p_ns = k_s / total, k_ns / total

    mean_residual = np.abs(mu_t - p_s * mu_s - p_ns * mu_ns)
    variance_residual = np.abs(
        var_t - p_s * (var_s + (mu_s - mu_t) ** 2) - p_ns * (var_ns + (mu_ns - mu_t) ** 2)
    )
    return DecompositionResiduals(mean_residual, variance_residual)


def regional_normalize(features: Tensor, mask: np.ndarray, epsilon: float) -> tuple[Tensor, np.ndarray]:
    '''
    shadow pixels: ((p - mu_s) / sigma_s) * sigma_ns + mu_ns
    non-shadow pixels: (p - mu_ns) / sigma_ns

    samples where either region is empty pass through unchanged, the
    returned boolean vector marks them
    '''
    full = features.shape
    shadow = region_stats(features, mask, MaskRegion.SHADOW, epsilon)
    lit = region_stats(features, mask, MaskRegion.NON_SHADOW, epsilon)

    def per_pixel(stat: Tensor) -> Tensor:
        return expand(stat.reshape(*_stat_shape(full)), full)

    mu_s, sd_s = per_pixel(shadow.mean), per_pixel(shadow.std)
    mu_ns, sd_ns = per_pixel(lit.mean), per_pixel(lit.std)
    shadow_out = (features - mu_s) / sd_s * sd_ns + mu_ns
    lit_out = (features - mu_ns) / sd_ns

    m = np.broadcast_to(mask, full)
    normed = shadow_out * Tensor(m, dtype=features.dtype.type) + lit_out * Tensor(1 - m, dtype=features.dtype.type)

    skipped = shadow.empty | lit.empty
    if not skipped.any():
        return normed, skipped
    keep = np.broadcast_to((~skipped).astype(features.dtype).reshape(-1, 1, 1, 1), full)
    mixed = normed * Tensor(keep, dtype=features.dtype.type) + features * Tensor(1 - keep, dtype=features.dtype.type)
    return mixed, skipped


class SOAN(Module):
    '''
    shadow-oriented adaptive normalization block

    the first half of the input channels is normalized region-wise (or by
    the bn / in ablations), the second half passes through; both are
    re-merged and run through two 3x3 convolutions, a 1x1 convolution of
    the block input is added as the residual
    '''

    fallbacks: int

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        config: SoanConfig,
        rng: np.random.Generator,
        enabled: bool = True,
    ) -> None:
        super().__init__()
        if in_channels % 2:
            raise ShapeError('SOAN', f'input channels must be even, got {in_channels}')
        self.config = config
        self.enabled = enabled
        self.norm = None
        if enabled and config.variant is SoanVariant.BN:
            self.norm = BatchNorm2d(in_channels // 2, config.epsilon)
        self.conv1 = Conv2d(in_channels, out_channels, 3, rng)
        self.conv2 = Conv2d(out_channels, out_channels, 3, rng)
        self.residual = Conv2d(in_channels, out_channels, 1, rng)
        self.fallbacks = 0

    def normalize(self, features: Tensor, mask: Tensor | np.ndarray) -> Tensor:
        '''
        the pre-convolution stage: returns the re-merged [F_in1', F_in2]
        '''
        check_shape('SOAN', features, 4)
        if not self.enabled:
            return features
        first, second = split(features, 2, axis=1)
        variant = self.config.variant
        if variant is SoanVariant.REGIONAL:
            m = _as_mask(mask, features, 'SOAN')
            first, skipped = regional_normalize(first, m, self.config.epsilon)
            if skipped.any():
                self.fallbacks += int(skipped.sum())
                logger.debug('soan: %d sample(s) lack a region at %s, skipped', skipped.sum(), features.shape[-2:])
        elif variant is SoanVariant.IN:
            first = F.instance_norm(first, self.config.epsilon)
        else:
            assert self.norm is not None
            first = self.norm(first)
        return concat([first, second], axis=1)

    def forward(self, features: Tensor, mask: Tensor | np.ndarray) -> Tensor:
        x = self.normalize(features, mask)
        x = F.leaky_relu(self.conv1(x))
        x = F.leaky_relu(self.conv2(x))
        return x + self.residual(features)


def soan_forward(features: Tensor, mask: Tensor | np.ndarray, block: SOAN) -> Tensor:
    return block(features, mask)


__all__ = [
    'DecompositionResiduals',
    'MaskRegion',
    'RegionStats',
    'SOAN',
    'region_stats',
    'regional_normalize',
    'soan_forward',
    'stats_decomposition_check',
]
