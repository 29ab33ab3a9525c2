from __future__ import annotations

import math
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from enum import Enum

import numpy as np
import pandas as pd
from scipy.ndimage import gaussian_filter

from cnsnet.core.errors import ShapeError
from cnsnet.core.tensor import Tensor
from cnsnet.metrics.colorspace import as_array
from cnsnet.metrics.colorspace import luma
from cnsnet.metrics.colorspace import srgb_to_lab

PSNR_CAP = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


class Region(str, Enum):
    SHADOW = 'shadow'
    NON_SHADOW = 'non_shadow'
    ALL = 'all'


REGIONS = (Region.SHADOW, Region.NON_SHADOW, Region.ALL)


class MetricConvention(str, Enum):
    '''
    how psnr and ssim see a region, lab mae is pixel-pooled under both

    region: psnr from the squared error of the selected pixels pooled over the
    split, ssim from the windows centred on selected pixels
    masked_image: both images have the other region zeroed, psnr and ssim are
    taken over the whole image and averaged per image, so ALL can score below
    both S and NS
    '''

    REGION = 'region'
    MASKED_IMAGE = 'masked_image'


@dataclass(frozen=True)
class RegionSelector:
    region: Region
    mask: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.mask)
        if m.ndim != 2:
            raise ShapeError('RegionSelector', 'mask must be [H, W]', (m.shape,))
        if not np.isin(m, (0, 1)).all():
            raise ValueError('region mask must be binary')

    def pixels(self) -> np.ndarray:
        shadow = np.asarray(self.mask).astype(bool)
        if self.region is Region.SHADOW:
            return shadow
        if self.region is Region.NON_SHADOW:
            return ~shadow
        return np.ones_like(shadow)


def _pair(pred: Tensor | np.ndarray, gt: Tensor | np.ndarray, op: str) -> tuple[np.ndarray, np.ndarray]:
    p, g = as_array(pred), as_array(gt)
    if p.shape != g.shape or p.ndim != 3 or p.shape[0] != 3:
        raise ShapeError(op, 'pred and gt must both be [3, H, W]', (p.shape, g.shape))
    return p, g


def _selected(selector: RegionSelector, shape: tuple[int, ...], op: str) -> np.ndarray:
    pixels = selector.pixels()
    if pixels.shape != shape[-2:]:
        raise ShapeError(op, 'mask does not match the image', (pixels.shape, shape))
    return pixels


# mae in lab


@dataclass(frozen=True)
class MaeAccumulator:
    total: float = 0.0
    count: int = 0

    @property
    def value(self) -> float:
        return self.total / self.count if self.count else math.nan


def accumulate_mae(
    pred: Tensor | np.ndarray,
    gt: Tensor | np.ndarray,
    selector: RegionSelector,
    acc: MaeAccumulator,
) -> MaeAccumulator:
    '''
    add the per-pixel channel-mean |lab difference| of the selected pixels
    '''
    p, g = _pair(pred, gt, 'accumulate_mae')
    pixels = _selected(selector, p.shape, 'accumulate_mae')
    diff = np.abs(srgb_to_lab(p) - srgb_to_lab(g)).sum(axis=0) / 3
    return MaeAccumulator(acc.total + float(diff[pixels].sum()), acc.count + int(pixels.sum()))


# psnr


def psnr_from_mse(mse: float) -> float:
    if math.isnan(mse):
        return math.nan
    if mse <= 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10 * math.log10(1 / mse))


def squared_error(
    pred: Tensor | np.ndarray, gt: Tensor | np.ndarray, selector: RegionSelector
) -> tuple[float, int]:
    '''
    sum of squared rgb errors over the selected pixels and the number of summed values
    '''
    p, g = _pair(pred, gt, 'psnr')
    pixels = _selected(selector, p.shape, 'psnr')
    sq = ((p - g) ** 2)[:, pixels]
    return float(sq.sum()), int(sq.size)


def psnr(pred: Tensor | np.ndarray, gt: Tensor | np.ndarray, selector: RegionSelector) -> float:
    '''
    10 log10(1 / mse) over the selected rgb values, nan for an empty region
    '''
    total, count = squared_error(pred, gt, selector)
    return psnr_from_mse(total / count if count else math.nan)


# ssim


def ssim_map(pred: Tensor | np.ndarray, gt: Tensor | np.ndarray) -> np.ndarray:
    '''
    local ssim of the luma images for every window that fits, indexed by window centre
    the result covers pixel centres [r:H-r, r:W-r] with r = SSIM_WINDOW // 2
    '''
    p, g = _pair(pred, gt, 'ssim')
    x, y = luma(p), luma(g)
    h, w = x.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ShapeError('ssim', f'image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window', (x.shape,))
    r = SSIM_WINDOW // 2
    truncate = r / SSIM_SIGMA

    def blur(a: np.ndarray) -> np.ndarray:
        return gaussian_filter(a, SSIM_SIGMA, mode='reflect', truncate=truncate)[r : h - r, r : w - r]

    c1, c2 = SSIM_K1**2, SSIM_K2**2
    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim_sum(
    pred: Tensor | np.ndarray, gt: Tensor | np.ndarray, selector: RegionSelector
) -> tuple[float, int]:
    local = ssim_map(pred, gt)
    r = SSIM_WINDOW // 2
    pixels = _selected(selector, as_array(pred).shape, 'ssim')
    centres = pixels[r : pixels.shape[0] - r, r : pixels.shape[1] - r]
    return float(local[centres].sum()), int(centres.sum())


def ssim(pred: Tensor | np.ndarray, gt: Tensor | np.ndarray, selector: RegionSelector) -> float:
    '''
    mean local ssim over the windows whose centre pixel is selected
    '''
    total, count = ssim_sum(pred, gt, selector)
    return total / count if count else math.nan


def masked_image_ssim(pred: Tensor | np.ndarray, gt: Tensor | np.ndarray, selector: RegionSelector) -> float:
    '''
    mean ssim over every window of the two images with the unselected pixels zeroed
    '''
    p, g = _pair(pred, gt, 'ssim')
    keep = _selected(selector, p.shape, 'ssim')
    if not keep.any():
        return math.nan
    return float(ssim_map(p * keep, g * keep).mean())


# reports


@dataclass(frozen=True)
class MetricReport:
    rmse_s: float
    rmse_ns: float
    rmse_all: float
    psnr_s: float
    psnr_ns: float
    psnr_all: float
    ssim_s: float
    ssim_ns: float
    ssim_all: float
    count_s: int
    count_ns: int
    count_all: int
    images: int

    def to_dict(self) -> dict[str, float | int | None]:
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(self).items()}

    def to_frame(self) -> pd.DataFrame:
        '''
        one row per metric, one column per region
        '''
        return pd.DataFrame(
            {
                'S': [self.rmse_s, self.psnr_s, self.ssim_s, self.count_s],
                'NS': [self.rmse_ns, self.psnr_ns, self.ssim_ns, self.count_ns],
                'ALL': [self.rmse_all, self.psnr_all, self.ssim_all, self.count_all],
            },
            index=['RMSE', 'PSNR', 'SSIM', 'pixels'],
        )


@dataclass
class _RegionSums:
    mae: MaeAccumulator = field(default_factory=MaeAccumulator)
    sq_total: float = 0.0
    sq_count: int = 0
    psnr_total: float = 0.0
    psnr_images: int = 0
    ssim_total: float = 0.0
    ssim_count: int = 0


class MetricAccumulator:
    '''
    pools lab mae, psnr and ssim over every pixel of a split, never per image
    '''

    _sums: dict[Region, _RegionSums]
    _images: int
    _convention: MetricConvention

    def __init__(self, convention: MetricConvention = MetricConvention.REGION) -> None:
        self._sums = {region: _RegionSums() for region in REGIONS}
        self._images = 0
        self._convention = convention

    @property
    def images(self) -> int:
        return self._images

    def add(self, pred: Tensor | np.ndarray, gt: Tensor | np.ndarray, mask: Tensor | np.ndarray) -> None:
        p, g = _pair(pred, gt, 'MetricAccumulator')
        m = (as_array(mask) > 0.5).astype(np.uint8)
        if m.ndim == 3:
            m = m[0]
        # per-image maps are shared by the three regions
        lab_diff = np.abs(srgb_to_lab(p) - srgb_to_lab(g)).sum(axis=0) / 3
        sq = ((p - g) ** 2).sum(axis=0)
        local = ssim_map(p, g)
        r = SSIM_WINDOW // 2
        for region in REGIONS:
            pixels = _selected(RegionSelector(region, m), p.shape, 'MetricAccumulator')
            centres = pixels[r : pixels.shape[0] - r, r : pixels.shape[1] - r]
            sums = self._sums[region]
            sums.mae = MaeAccumulator(
                sums.mae.total + float(lab_diff[pixels].sum()), sums.mae.count + int(pixels.sum())
            )
            region_sq = float(sq[pixels].sum())
            sums.sq_total += region_sq
            sums.sq_count += 3 * int(pixels.sum())
            if self._convention is MetricConvention.REGION:
                sums.ssim_total += float(local[centres].sum())
                sums.ssim_count += int(centres.sum())
            elif pixels.any():
                # an image without the region does not vote for it
                sums.psnr_total += psnr_from_mse(region_sq / (3 * m.size))
                sums.psnr_images += 1
                if pixels.all():
                    sums.ssim_total += float(local.mean())
                else:
                    sums.ssim_total += masked_image_ssim(p, g, RegionSelector(region, m))
                sums.ssim_count += 1
        self._images += 1

    def merge(self, other: MetricAccumulator) -> None:
        '''
        fold another accumulator in, reduction order is the caller's
        '''
        for region in REGIONS:
            mine, theirs = self._sums[region], other._sums[region]
            self._sums[region] = replace(
                mine,
                mae=MaeAccumulator(mine.mae.total + theirs.mae.total, mine.mae.count + theirs.mae.count),
                sq_total=mine.sq_total + theirs.sq_total,
                sq_count=mine.sq_count + theirs.sq_count,
                psnr_total=mine.psnr_total + theirs.psnr_total,
                psnr_images=mine.psnr_images + theirs.psnr_images,
                ssim_total=mine.ssim_total + theirs.ssim_total,
                ssim_count=mine.ssim_count + theirs.ssim_count,
            )
        self._images += other._images

    def _psnr(self, region: Region) -> float:
        sums = self._sums[region]
        if self._convention is MetricConvention.MASKED_IMAGE:
            return sums.psnr_total / sums.psnr_images if sums.psnr_images else math.nan
        return psnr_from_mse(sums.sq_total / sums.sq_count if sums.sq_count else math.nan)

    def _ssim(self, region: Region) -> float:
        sums = self._sums[region]
        return sums.ssim_total / sums.ssim_count if sums.ssim_count else math.nan

    def report(self) -> MetricReport:
        s, ns, a = (self._sums[r] for r in REGIONS)
        return MetricReport(
            rmse_s=s.mae.value,
            rmse_ns=ns.mae.value,
            rmse_all=a.mae.value,
            psnr_s=self._psnr(Region.SHADOW),
            psnr_ns=self._psnr(Region.NON_SHADOW),
            psnr_all=self._psnr(Region.ALL),
            ssim_s=self._ssim(Region.SHADOW),
            ssim_ns=self._ssim(Region.NON_SHADOW),
            ssim_all=self._ssim(Region.ALL),
            count_s=s.mae.count,
            count_ns=ns.mae.count,
            count_all=a.mae.count,
            images=self._images,
        )


__all__ = [
    'MaeAccumulator',
    'MetricAccumulator',
    'MetricConvention',
    'MetricReport',
    'PSNR_CAP',
    'REGIONS',
    'Region',
    'RegionSelector',
    'accumulate_mae',
    'masked_image_ssim',
    'psnr',
    'psnr_from_mse',
    'squared_error',
    'ssim',
    'ssim_map',
    'ssim_sum',
]
