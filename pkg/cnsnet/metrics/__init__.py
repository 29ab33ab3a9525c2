from __future__ import annotations

from cnsnet.metrics.colorspace import srgb_to_lab
from cnsnet.metrics.quality import accumulate_mae
from cnsnet.metrics.quality import MetricAccumulator
from cnsnet.metrics.quality import MetricReport
from cnsnet.metrics.quality import psnr
from cnsnet.metrics.quality import Region
from cnsnet.metrics.quality import RegionSelector
from cnsnet.metrics.quality import ssim

__all__ = [
    'MetricAccumulator',
    'MetricReport',
    'Region',
    'RegionSelector',
    'accumulate_mae',
    'psnr',
    'srgb_to_lab',
    'ssim',
]
