from __future__ import annotations

import os
from argparse import Namespace
from dataclasses import dataclass
from dataclasses import field
from dataclasses import fields
from dataclasses import is_dataclass
from dataclasses import replace
from enum import Enum
from pathlib import Path
from typing import Any
from typing import get_type_hints

from dotenv import load_dotenv

from cnsnet.core.errors import ConfigError


class SoanVariant(str, Enum):
    REGIONAL = 'regional'
    BN = 'bn'
    IN = 'in'


class MaskMode(str, Enum):
    SOFT = 'soft'
    HARD = 'hard'


class GridPolicy(str, Enum):
    STRICT = 'strict'
    INTERPOLATE = 'interpolate'


@dataclass
class SoanConfig:
    variant: SoanVariant = SoanVariant.REGIONAL
    epsilon: float = 1e-5
    per_scale: int = 1
    in_decoder: bool = True

    def validate(self) -> None:
        if self.epsilon <= 0:
            raise ConfigError('soan.epsilon must be positive')
        if self.per_scale < 1:
            raise ConfigError('soan.per_scale must be at least 1')


@dataclass
class SaatConfig:
    heads: int = 4
    layers: int = 2
    ffn_expansion: int = 2
    mask_mode: MaskMode = MaskMode.SOFT
    grid_policy: GridPolicy = GridPolicy.STRICT

    def validate(self, channels: int) -> None:
        if self.layers < 1:
            raise ConfigError('saat.layers must be at least 1')
        if self.heads < 1 or channels % self.heads:
            raise ConfigError(f'saat.heads={self.heads} must divide the bottleneck width {channels}')
        if self.ffn_expansion < 1:
            raise ConfigError('saat.ffn_expansion must be at least 1')


@dataclass
class LossWeights:
    rem: float = 10.0
    soft: float = 5.0
    per: float = 1.0
    grad: float = 1.0
    dilation: int = 7

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.rem, self.soft, self.per, self.grad)


@dataclass
class ModelConfig:
    base_width: int = 32
    max_width: int = 64
    scales: int = 4
    image_size: int = 64
    predictor_width: int = 16
    predictor_scales: int = 3
    enable_soan: bool = True
    enable_saat: bool = True
    seed: int = 0
    soan: SoanConfig = field(default_factory=SoanConfig)
    saat: SaatConfig = field(default_factory=SaatConfig)
    loss: LossWeights = field(default_factory=LossWeights)

    def widths(self) -> list[int]:
        '''
        encoder widths, doubling per scale up to max_width
        '''
        return [min(self.base_width * 2**k, self.max_width) for k in range(self.scales)]

    @property
    def bottleneck_width(self) -> int:
        return self.widths()[-1]

    @property
    def divisor(self) -> int:
        return 2**self.scales

    @property
    def grid(self) -> tuple[int, int]:
        side = self.image_size // self.divisor
        return side, side

    def validate(self) -> None:
        if self.scales < 2:
            raise ConfigError('model.scales must be at least 2')
        if self.base_width < 2 or self.base_width % 2:
            raise ConfigError('model.base_width must be even, SOAN splits channels in half')
        if self.max_width < self.base_width or self.max_width % 2:
            raise ConfigError('model.max_width must be even and at least base_width')
        if self.image_size % self.divisor:
            raise ConfigError(f'model.image_size must be a multiple of {self.divisor}')
        self.soan.validate()
        self.saat.validate(self.bottleneck_width)


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_factor: float = 0.5
    patience: int = 10
    min_lr: float = 1e-6

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError('adam.lr must be positive')
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ConfigError('adam betas must lie in [0, 1)')
        if not 0 < self.decay_factor <= 1:
            raise ConfigError('adam.decay_factor must lie in (0, 1]')


@dataclass
class SynthSpec:
    size: int = 64
    shapes_min: int = 2
    shapes_max: int = 5
    shadows_min: int = 1
    shadows_max: int = 2
    attenuation_min: float = 0.2
    attenuation_max: float = 0.6
    blur_min: float = 0.0
    blur_max: float = 2.0
    noise: float = 0.02

    def validate(self) -> None:
        if not 0 < self.attenuation_min <= self.attenuation_max <= 1:
            raise ConfigError('synth attenuation must lie in (0, 1]')
        if not 0 <= self.blur_min <= self.blur_max:
            raise ConfigError('synth blur radius must be non-negative')
        if self.shadows_min < 1 or self.shadows_min > self.shadows_max:
            raise ConfigError('synth shadow count range is empty')
        if self.shapes_min < 0 or self.shapes_min > self.shapes_max:
            raise ConfigError('synth shape count range is empty')


@dataclass
class TrainConfig:
    batch_size: int = 4
    patch_size: int = 64
    steps: int = 2000
    epochs: int = 0
    steps_per_epoch: int = 100
    train_count: int = 500
    val_count: int = 32
    log_every: int = 10
    checkpoint_every: int = 0
    crop: bool = True
    rotate: bool = True
    flip: bool = True

    def validate(self) -> None:
        if self.batch_size < 1 or self.patch_size < 1:
            raise ConfigError('train.batch_size and train.patch_size must be positive')
        if self.steps < 0 or self.epochs < 0 or self.steps_per_epoch < 1:
            raise ConfigError('train schedule must be non-negative')


@dataclass
class Config:
    DATA_PATH: Path | None = None
    seed: int = 0
    log_level: str = 'INFO'
    model: ModelConfig = field(default_factory=ModelConfig)
    adam: AdamConfig = field(default_factory=AdamConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)

    def validate(self) -> Config:
        self.model.validate()
        self.adam.validate()
        self.train.validate()
        self.synth.validate()
        if self.train.patch_size % self.model.divisor:
            raise ConfigError(f'train.patch_size must be a multiple of {self.model.divisor}')
        if self.synth.size < self.train.patch_size:
            raise ConfigError('synth.size must be at least train.patch_size')
        return self


# flat key-value documents

_SECTIONS = ('model', 'adam', 'train', 'synth')


def _format(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _flatten(obj: Any, prefix: str) -> list[tuple[str, str]]:
    items: list[tuple[str, str]] = []
    for f in fields(obj):
        value = getattr(obj, f.name)
        key = f'{prefix}{f.name}'
        if is_dataclass(value):
            items.extend(_flatten(value, f'{key}.'))
        else:
            items.append((key, _format(value)))
    return items


def dump_config(config: Config) -> str:
    lines = [f'seed = {config.seed}']
    for section in _SECTIONS:
        lines.extend(f'{k} = {v}' for k, v in _flatten(getattr(config, section), f'{section}.'))
    return '\n'.join(lines) + '\n'


def _coerce(key: str, raw: str, tp: Any) -> Any:
    try:
        if isinstance(tp, type) and issubclass(tp, Enum):
            return tp(raw)
        if tp is bool:
            if raw not in ('true', 'false'):
                raise ValueError(raw)
            return raw == 'true'
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        if tp is str:
            return raw
    except ValueError as e:
        raise ConfigError(f'bad value for `{key}`: {raw!r}') from e
    raise ConfigError(f'`{key}` cannot be set from a config document')


def _assign(obj: Any, path: list[str], key: str, raw: str) -> Any:
    hints = get_type_hints(type(obj))
    name = path[0]
    if name not in hints:
        raise ConfigError(f'unknown config key `{key}`')
    current = getattr(obj, name)
    if len(path) == 1:
        if is_dataclass(current):
            raise ConfigError(f'`{key}` is a section, not a value')
        return replace(obj, **{name: _coerce(key, raw, hints[name])})
    if not is_dataclass(current):
        raise ConfigError(f'unknown config key `{key}`')
    return replace(obj, **{name: _assign(current, path[1:], key, raw)})


def parse_config(text: str, base: Config | None = None) -> Config:
    '''
    apply a `dotted.key = value` document on top of `base`
    '''
    config = base if base is not None else Config()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f'line {lineno}: expected `key = value`')
        key, raw = (part.strip() for part in line.split('=', 1))
        if key in ('DATA_PATH', 'log_level'):
            raise ConfigError(f'line {lineno}: `{key}` is a runtime option')
        config = _assign(config, key.split('.'), key, raw)
    return config


def load_config(path: str | os.PathLike[str], base: Config | None = None) -> Config:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f'cannot read config {path}: {e}') from e
    return parse_config(text, base)


# presets and ablations


def full_scale(config: Config) -> Config:
    '''
    the full-size training setup: 256px patches, batch 8, 200 epochs
    '''
    model = replace(config.model, image_size=256)
    train = replace(config.train, patch_size=256, batch_size=8, epochs=200, steps=0)
    synth = replace(config.synth, size=256)
    return replace(config, model=model, train=train, synth=synth)


def _wo_soan(m: ModelConfig) -> ModelConfig:
    return replace(m, enable_soan=False)


def _wo_saat(m: ModelConfig) -> ModelConfig:
    return replace(m, enable_saat=False)


def _soan_bn(m: ModelConfig) -> ModelConfig:
    return replace(m, soan=replace(m.soan, variant=SoanVariant.BN))


def _soan_in(m: ModelConfig) -> ModelConfig:
    return replace(m, soan=replace(m.soan, variant=SoanVariant.IN))


def _saat_hardmask(m: ModelConfig) -> ModelConfig:
    return replace(m, saat=replace(m.saat, mask_mode=MaskMode.HARD))


def _wo_loss(term: str) -> Any:
    def apply(m: ModelConfig) -> ModelConfig:
        return replace(m, loss=replace(m.loss, **{term: 0.0}))

    return apply


ABLATIONS = {
    'wo_soan': _wo_soan,
    'wo_saat': _wo_saat,
    'soan_bn': _soan_bn,
    'soan_in': _soan_in,
    'saat_hardmask': _saat_hardmask,
    'wo_lsoft': _wo_loss('soft'),
    'wo_lgrad': _wo_loss('grad'),
    'wo_lper': _wo_loss('per'),
}


def apply_ablation(config: Config, name: str) -> Config:
    try:
        ablate = ABLATIONS[name]
    except KeyError as e:
        raise ConfigError(f'unknown ablation `{name}`, choose from {", ".join(ABLATIONS)}') from e
    return replace(config, model=ablate(config.model))


# global config


GLOBAL_CONFIG = Config()


def set_config(ns: Namespace) -> Config:
    '''
    defaults < --paper-scale < --config file < explicit flags
    '''
    global GLOBAL_CONFIG
    load_dotenv()
    config = Config()
    if getattr(ns, 'full_scale', False):
        config = full_scale(config)
    if getattr(ns, 'config', None):
        config = load_config(ns.config, config)
    if getattr(ns, 'seed', None) is not None:
        config = replace(config, seed=ns.seed, model=replace(config.model, seed=ns.seed))
    for name in getattr(ns, 'ablation', None) or ():
        config = apply_ablation(config, name)
    data = getattr(ns, 'data', None) or os.environ.get('CNSNET_DATA')
    config = replace(
        config,
        DATA_PATH=Path(data) if data else None,
        log_level=getattr(ns, 'log_level', None) or config.log_level,
    )
    GLOBAL_CONFIG = config.validate()
    return GLOBAL_CONFIG


def get_config() -> Config:
    return GLOBAL_CONFIG


__all__ = [
    'ABLATIONS',
    'AdamConfig',
    'Config',
    'GridPolicy',
    'LossWeights',
    'MaskMode',
    'ModelConfig',
    'SaatConfig',
    'SoanConfig',
    'SoanVariant',
    'SynthSpec',
    'TrainConfig',
    'apply_ablation',
    'dump_config',
    'full_scale',
    'get_config',
    'load_config',
    'parse_config',
    'set_config',
]
