from __future__ import annotations

import os
from logging import getLogger
from pathlib import Path

from cnsnet.config import GridPolicy
from cnsnet.data.imageio import read_mask
from cnsnet.data.imageio import read_rgb
from cnsnet.data.imageio import write_mask
from cnsnet.data.imageio import write_rgb
from cnsnet.network.model import remove_shadow
from cnsnet.training.checkpoint import load_checkpoint

logger = getLogger(__name__)


def infer(
    checkpoint: str | os.PathLike[str],
    image: str | os.PathLike[str],
    mask: str | os.PathLike[str],
    out: str | os.PathLike[str],
    grid_policy: GridPolicy = GridPolicy.INTERPOLATE,
) -> tuple[Path, Path]:
    '''
    remove the shadow of one image, writes `<stem>_free.png` and `<stem>_soft.png`
    '''
    model = load_checkpoint(checkpoint).build_model()
    model.eval()
    model.set_grid_policy(grid_policy)
    output, soft = remove_shadow(model, read_rgb(image), read_mask(mask))

    stem = Path(image).stem
    free_path = Path(out) / f'{stem}_free.png'
    soft_path = Path(out) / f'{stem}_soft.png'
    write_rgb(free_path, output)
    write_mask(soft_path, soft)
    logger.info('wrote %s and %s', free_path, soft_path)
    return free_path, soft_path


__all__ = [
    'infer',
]
