from __future__ import annotations

import math
import tempfile
import time
from collections.abc import Callable
from collections.abc import Iterable
from dataclasses import asdict
from dataclasses import dataclass
from logging import getLogger

import numpy as np
import pandas as pd

from cnsnet.config import Config
from cnsnet.config import SaatConfig
from cnsnet.config import SoanConfig
from cnsnet.core import functional as F
from cnsnet.core.archive import dumps
from cnsnet.core.archive import loads
from cnsnet.core.gradcheck import check_gradients
from cnsnet.core.gradcheck import DEFAULT_TOLERANCE
from cnsnet.core.tensor import default_dtype
from cnsnet.core.tensor import Tensor
from cnsnet.core.tensor import tsum
from cnsnet.masks.ops import soft_mask_target
from cnsnet.metrics.colorspace import srgb_to_lab
from cnsnet.metrics.quality import MetricAccumulator
from cnsnet.metrics.quality import PSNR_CAP
from cnsnet.network.layers import Linear
from cnsnet.network.losses import loss_grad
from cnsnet.network.losses import loss_per
from cnsnet.network.model import CNSNet
from cnsnet.network.perceptual import PerceptualExtractor
from cnsnet.network.saat import add_positional
from cnsnet.network.saat import masked_attention
from cnsnet.network.saat import MaskedAttention
from cnsnet.network.saat import SAAT
from cnsnet.network.saat import saat_forward
from cnsnet.network.soan import regional_normalize
from cnsnet.network.soan import SOAN
from cnsnet.network.soan import soan_forward
from cnsnet.network.soan import stats_decomposition_check
from cnsnet.training.learning import learning_check

logger = getLogger(__name__)

GRADIENT_SEEDS = 5
GRADIENT_MIN_CHECKED = 5
PARAM_RANGE = (800_000, 1_600_000)
LEARNING_MIN_GAIN = 0.3


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    seconds: float = 0.0


Check = Callable[[int], tuple[float, float, bool]]
GradientCase = Callable[[np.random.Generator], tuple[Callable[[], Tensor], list[Tensor]]]

CHECKS: dict[str, Check] = {}


def check(name: str) -> Callable[[Check], Check]:
    def register(fn: Check) -> Check:
        CHECKS[name] = fn
        return fn

    return register


def _binary_mask(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    m = rng.random((h, w)) < rng.uniform(0.2, 0.8)
    m[0, 0], m[-1, -1] = True, False
    return m


def _weighted_sum(out: Tensor, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    coeff = Tensor(rng.normal(size=out.shape))
    return lambda y: tsum(y * coeff)


def _gradients(case: GradientCase, seed: int, max_entries: int | None = 40) -> tuple[float, float, bool]:
    '''
    worst relative error over GRADIENT_SEEDS float64 runs of one case, a run
    that compares too few coordinates fails regardless of its error
    '''
    worst = 0.0
    passed = True
    with default_dtype(np.float64):
        for k in range(GRADIENT_SEEDS):
            rng = np.random.default_rng((seed, k))
            fn, inputs = case(rng)
            result = check_gradients(fn, inputs, max_entries=max_entries, rng=rng, min_checked=GRADIENT_MIN_CHECKED)
            worst = max(worst, result.max_error)
            passed = passed and result.passed
    return worst, DEFAULT_TOLERANCE, passed


# gradient checks


@check('conv2d_gradient')
def conv2d_gradient(seed: int) -> tuple[float, float, bool]:
    def case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
        stride, padding = (1, 1) if rng.random() < 0.5 else (2, 0)
        x = Tensor(rng.normal(size=(2, 3, 7, 7)), requires_grad=True)
        w = Tensor(rng.normal(size=(4, 3, 3, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=4), requires_grad=True)
        reduce = _weighted_sum(F.conv2d(x, w, b, stride, padding), rng)
        return lambda: reduce(F.conv2d(x, w, b, stride, padding)), [x, w, b]

    return _gradients(case, seed, max_entries=None)


@check('soan_gradient')
def soan_gradient(seed: int) -> tuple[float, float, bool]:
    def case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
        block = SOAN(4, 4, SoanConfig(), rng)
        x = Tensor(rng.normal(size=(1, 4, 6, 6)) * 2 + 1, requires_grad=True)
        mask = _binary_mask(rng, 6, 6).astype(np.float64)
        reduce = _weighted_sum(soan_forward(x, mask, block), rng)
        return lambda: reduce(soan_forward(x, mask, block)), [x, block.conv1.weight]

    return _gradients(case, seed)


@check('attention_gradient')
def attention_gradient(seed: int) -> tuple[float, float, bool]:
    def case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
        attention = MaskedAttention(8, 2, rng)
        tokens = Tensor(rng.normal(size=(1, 5, 8)), requires_grad=True)
        mask = Tensor(rng.uniform(size=(1, 5, 8)), requires_grad=True)
        reduce = _weighted_sum(masked_attention(tokens, mask, attention), rng)
        return lambda: reduce(masked_attention(tokens, mask, attention)), [tokens, mask, attention.key.weight]

    return _gradients(case, seed)


@check('saat_gradient')
def saat_gradient(seed: int) -> tuple[float, float, bool]:
    def case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
        block = SAAT(8, (2, 2), SaatConfig(heads=2, layers=1), rng)
        features = Tensor(rng.normal(size=(1, 8, 2, 2)), requires_grad=True)
        guide = Tensor(rng.uniform(size=(1, 1, 2, 2)))
        reduce = _weighted_sum(saat_forward(features, guide, block), rng)
        return lambda: reduce(saat_forward(features, guide, block)), [features, block.positional.table]

    return _gradients(case, seed)


@check('loss_grad_gradient')
def loss_grad_gradient(seed: int) -> tuple[float, float, bool]:
    def case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
        output = Tensor(rng.uniform(size=(1, 3, 8, 8)), requires_grad=True)
        shadow, gt = rng.uniform(size=(2, 1, 3, 8, 8))
        mask = _binary_mask(rng, 8, 8).astype(np.float64)
        return lambda: loss_grad(output, shadow, gt, mask, dilation=1), [output]

    return _gradients(case, seed, max_entries=60)


@check('loss_per_gradient')
def loss_per_gradient(seed: int) -> tuple[float, float, bool]:
    def case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
        extractor = PerceptualExtractor(int(rng.integers(1 << 16)))
        output = Tensor(rng.uniform(size=(1, 3, 16, 16)), requires_grad=True)
        gt = rng.uniform(size=(1, 3, 16, 16))
        return lambda: loss_per(output, gt, extractor), [output]

    return _gradients(case, seed, max_entries=60)


# identities and oracles


@check('stats_decomposition')
def stats_decomposition(seed: int, pairs: int = 1000) -> tuple[float, float, bool]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        x = rng.normal(size=(1, 3, 8, 8)) * rng.uniform(0.1, 5) + rng.uniform(-3, 3)
        mask = rng.random((8, 8)) < rng.uniform(0.05, 0.95)
        worst = max(worst, stats_decomposition_check(x, mask).max)
    return worst, 1e-8, worst < 1e-8


@check('soan_stat_transfer')
def soan_stat_transfer(seed: int, maps: int = 200) -> tuple[float, float, bool]:
    '''
    after regional normalization the shadow pixels carry the lit region's mean and std
    '''
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(maps):
        x = (rng.normal(size=(1, 4, 12, 12)) * rng.uniform(0.5, 3) + rng.uniform(-2, 2)).astype(np.float32)
        x[:, :, :6] -= 1
        mask = _binary_mask(rng, 12, 12)
        out, _ = regional_normalize(Tensor(x), mask.astype(np.float32)[None, None], 1e-5)
        normed = out.numpy().astype(np.float64)
        lit = x.astype(np.float64)[0][:, ~mask]
        shadowed = normed[0][:, mask]
        worst = max(
            worst,
            float(np.max(np.abs(shadowed.mean(axis=1) - lit.mean(axis=1)))),
            float(np.max(np.abs(shadowed.std(axis=1) - lit.std(axis=1)))),
        )
    return worst, 1e-4, worst < 1e-4


def _plain_attention(tokens: np.ndarray, attention: MaskedAttention) -> np.ndarray:
    def project(layer: Linear, x: np.ndarray) -> np.ndarray:
        bias = 0 if layer.bias is None else layer.bias.numpy()
        return x @ layer.weight.numpy() + bias

    n, count, c = tokens.shape
    h = attention.heads

    def heads(x: np.ndarray) -> np.ndarray:
        return x.reshape(n, count, h, c // h).transpose(0, 2, 1, 3)

    q = heads(project(attention.query, tokens))
    k = heads(project(attention.key, tokens))
    v = heads(project(attention.value, tokens))
    logits = q @ k.transpose(0, 1, 3, 2) / math.sqrt(c)
    weights = np.exp(logits - logits.max(axis=-1, keepdims=True))
    weights /= weights.sum(axis=-1, keepdims=True)
    out = (weights @ v).transpose(0, 2, 1, 3).reshape(n, count, c)
    return project(attention.proj, out)


@check('neutral_mask_attention')
def neutral_mask_attention(seed: int, configs: int = 100) -> tuple[float, float, bool]:
    '''
    an all-ones mask with a zero positional table is plain attention, and
    attention rows sum to one under any mask
    '''
    rng = np.random.default_rng(seed)
    worst = 0.0
    with default_dtype(np.float64):
        for _ in range(configs):
            heads = int(rng.choice([1, 2, 4]))
            c = heads * int(rng.integers(1, 5))
            count = int(rng.integers(1, 10))
            attention = MaskedAttention(c, heads, rng)
            tokens = rng.normal(size=(1, count, c))
            x, m = add_positional(Tensor(tokens), Tensor(np.ones((1, count, 1))), Tensor(np.zeros((count, c))))
            got = masked_attention(x, m, attention).numpy()
            worst = max(worst, float(np.max(np.abs(got - _plain_attention(tokens, attention)))))
            rows = attention.scores(Tensor(tokens), Tensor(rng.uniform(size=(1, count, c)))).numpy().sum(axis=-1)
            worst = max(worst, float(np.max(np.abs(rows - 1))))
    return worst, 1e-6, worst < 1e-6


def _soft_mask_loop(shadow: np.ndarray, free: np.ndarray) -> np.ndarray:
    _, h, w = shadow.shape
    out = np.zeros((h, w))
    for c in range(3):
        d = [[shadow[c, i, j] - free[c, i, j] for j in range(w)] for i in range(h)]
        lo = min(min(row) for row in d)
        hi = max(max(row) for row in d)
        for i in range(h):
            for j in range(w):
                if hi > lo:
                    out[i, j] += abs((d[i][j] - lo) / (hi - lo)) / 3
    return out


@check('soft_mask_oracle')
def soft_mask_oracle(seed: int, pairs: int = 100) -> tuple[float, float, bool]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        free = rng.uniform(size=(3, 6, 6))
        shadow = free * rng.uniform(0.2, 1, size=(3, 6, 6))
        soft = soft_mask_target(shadow, free)
        worst = max(worst, float(np.max(np.abs(soft - _soft_mask_loop(shadow, free)))))
        if soft.min() < 0 or soft.max() > 1 or np.any(soft_mask_target(free, free) != 0):
            return math.inf, 1e-6, False
    return worst, 1e-6, worst < 1e-6


@check('metric_oracles')
def metric_oracles(seed: int) -> tuple[float, float, bool]:
    '''
    a perfect prediction scores rmse 0, ssim 1, capped psnr; white is lab (100, 0, 0)
    '''
    rng = np.random.default_rng(seed)
    metrics = MetricAccumulator()
    for _ in range(3):
        gt = rng.uniform(size=(3, 24, 24))
        metrics.add(gt, gt, _binary_mask(rng, 24, 24))
    report = metrics.report()
    errors = [
        report.rmse_s,
        report.rmse_ns,
        report.rmse_all,
        abs(report.ssim_s - 1),
        abs(report.ssim_ns - 1),
        abs(report.ssim_all - 1),
        abs(report.psnr_all - PSNR_CAP),
        float(np.max(np.abs(srgb_to_lab(np.ones((3, 1, 1))).reshape(3) - [100, 0, 0]))),
    ]
    worst = max(errors)
    return worst, 1e-9, worst < 1e-9


@check('archive_roundtrip')
def archive_roundtrip(seed: int) -> tuple[float, float, bool]:
    state = CNSNet(Config().model).state_dict()
    blob = dumps(state, {'seed': str(seed)})
    identical = dumps(loads(blob).tensors, loads(blob).metadata) == blob
    return float(len(blob)), math.nan, identical


@check('param_budget')
def param_budget(seed: int) -> tuple[float, float, bool]:
    params = CNSNet(Config().model).param_count()
    lo, hi = PARAM_RANGE
    return float(params), float(hi), lo <= params <= hi


def run_checks(names: Iterable[str] | None = None, seed: int = 0) -> pd.DataFrame:
    rows = []
    for name in names or CHECKS:
        start = time.perf_counter()
        try:
            value, limit, passed = CHECKS[name](seed)
        except Exception as e:  # a crashing check is a failing check
            logger.error('%s raised %s: %s', name, type(e).__name__, e)
            value, limit, passed = math.nan, math.nan, False
        result = CheckResult(name, bool(passed), value, limit, time.perf_counter() - start)
        if result.passed:
            logger.info('%s: pass (%.3g)', name, value)
        else:
            logger.error('%s: FAIL, %.3g against a limit of %.3g', name, value, limit)
        rows.append(asdict(result))
    return pd.DataFrame(rows).set_index('name')


def selftest(config: Config, learning: bool = False) -> int:
    table = run_checks(seed=config.seed)
    model = CNSNet(config.model)
    params, macs = model.complexity(config.model.image_size, config.model.image_size)
    print(table.to_string(float_format=lambda v: f'{v:.3g}'))
    print(f'\nmodel: {params:,} parameters, {macs / 1e6:.1f}M MACs at {config.model.image_size}px')
    failed = table.index[~table['passed']].tolist()
    if learning:
        with tempfile.TemporaryDirectory() as out_dir:
            report = learning_check(config, out_dir, min_gain=LEARNING_MIN_GAIN)
        print(f'\n{report.to_frame().to_string(float_format=lambda v: f"{v:.3g}")}')
        print(f'soft mask l1: {report.soft_loss:.3g} against {report.soft_baseline:.3g} for a constant 0.5')
        if not report.passed:
            failed.append('learning')
    if failed:
        logger.error('failed checks: %s', ', '.join(failed))
        return 1
    return 0


__all__ = [
    'CHECKS',
    'CheckResult',
    'run_checks',
    'selftest',
]
