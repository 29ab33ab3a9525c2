from __future__ import annotations

from cnsnet.masks.ops import dilate
from cnsnet.masks.ops import resize_mask
from cnsnet.masks.ops import soft_mask_loss
from cnsnet.masks.ops import soft_mask_target
from cnsnet.masks.predictor import predict_soft_mask
from cnsnet.masks.predictor import SoftMaskPredictor

__all__ = [
    'SoftMaskPredictor',
    'dilate',
    'predict_soft_mask',
    'resize_mask',
    'soft_mask_loss',
    'soft_mask_target',
]
