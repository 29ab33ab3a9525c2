from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np
from PIL import Image
from PIL import ImageDraw
from scipy.ndimage import gaussian_filter

from cnsnet.config import SynthSpec
from cnsnet.data.triplet import ImageTriplet

_MAX_ATTEMPTS = 32


def _canvas(size: int) -> tuple[Image.Image, ImageDraw.ImageDraw]:
    image = Image.new('L', (size, size), 0)
    return image, ImageDraw.Draw(image)


def _blob(rng: np.random.Generator, size: int, scale: tuple[float, float]) -> np.ndarray:
    '''
    a random convex polygon or ellipse as a boolean [size, size] mask
    '''
    image, draw = _canvas(size)
    cx, cy = rng.uniform(0.15, 0.85, 2) * size
    rx, ry = rng.uniform(*scale, 2) * size
    if rng.random() < 0.5:
        draw.ellipse([cx - rx, cy - ry, cx + rx, cy + ry], fill=255)
    else:
        # sorted angles on an ellipse give a convex polygon
        k = int(rng.integers(3, 9))
        angles = np.sort(rng.uniform(0, 2 * math.pi, k))
        points = [(cx + rx * math.cos(a), cy + ry * math.sin(a)) for a in angles]
        draw.polygon(points, fill=255)
    return np.asarray(image) > 0


def _gradient(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    theta = rng.uniform(0, 2 * math.pi)
    t = xx * math.cos(theta) + yy * math.sin(theta)
    t = (t - t.min()) / max(float(np.ptp(t)), 1e-12)
    low, high = rng.uniform(0.35, 0.95, (2, 3))
    return low[:, None, None] * (1 - t) + high[:, None, None] * t


def shadow_free_scene(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    '''
    linear colour gradient, flat coloured shapes on top, mild smoothed noise;
    float64 [3, size, size] in [0, 1]
    '''
    size = spec.size
    scene = _gradient(rng, size)
    for _ in range(int(rng.integers(spec.shapes_min, spec.shapes_max + 1))):
        region = _blob(rng, size, (0.08, 0.3))
        colour = rng.uniform(0.1, 0.95, 3)
        scene = np.where(region, colour[:, None, None], scene)
    noise = gaussian_filter(rng.normal(0, 1, scene.shape) * spec.noise, sigma=(0, 1, 1))
    return np.clip(scene + noise, 0, 1)


def shadow_matte(spec: SynthSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    '''
    (blurred union of shadow blobs in [0, 1], hard mask thresholded at 0.5)

    redraws until the hard mask has both shadow and lit pixels
    '''
    size = spec.size
    for _ in range(_MAX_ATTEMPTS):
        union = np.zeros((size, size), dtype=bool)
        for _ in range(int(rng.integers(spec.shadows_min, spec.shadows_max + 1))):
            union |= _blob(rng, size, (0.12, 0.35))
        sigma = rng.uniform(spec.blur_min, spec.blur_max)
        matte = union.astype(np.float64)
        if sigma > 0:
            matte = np.clip(gaussian_filter(matte, sigma), 0, 1)
        hard = (matte >= 0.5).astype(np.uint8)
        if 0 < hard.sum() < hard.size:
            return matte, hard
    return matte, hard


def synth_triplet(
    spec: SynthSpec,
    seed: int | Sequence[int],
    id: str | None = None,
) -> ImageTriplet:
    '''
    shadow = shadow_free * (1 - (1 - a_c) * matte) with a per-channel attenuation a_c,
    deterministic per seed
    '''
    spec.validate()
    rng = np.random.default_rng(seed)
    free = shadow_free_scene(spec, rng).astype(np.float32)
    matte, hard = shadow_matte(spec, rng)
    attenuation = rng.uniform(spec.attenuation_min, spec.attenuation_max, 3)
    factor = (1 - (1 - attenuation[:, None, None]) * matte[None]).astype(np.float32)
    shadow = free * factor
    if id is None:
        id = 'synth-' + '-'.join(str(s) for s in np.atleast_1d(seed))
    return ImageTriplet(shadow, hard, free, id)


__all__ = [
    'shadow_free_scene',
    'shadow_matte',
    'synth_triplet',
]
