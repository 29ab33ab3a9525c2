from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cnsnet.config import GridPolicy
from cnsnet.config import SaatConfig
from cnsnet.core import functional as F
from cnsnet.core.errors import GridMismatch
from cnsnet.core.errors import ShapeError
from cnsnet.core.module import check_shape
from cnsnet.core.module import Module
from cnsnet.core.module import ModuleList
from cnsnet.core.module import Parameter
from cnsnet.core.tensor import expand
from cnsnet.core.tensor import get_default_dtype
from cnsnet.core.tensor import matmul
from cnsnet.core.tensor import Tensor
from cnsnet.network.layers import LayerNorm
from cnsnet.network.layers import Linear


@dataclass(frozen=True)
class TokenGrid:
    '''
    row-major pixel tokens [N, n, c] of an [N, c, h, w] feature map
    '''

    tokens: Tensor
    shape: tuple[int, int]

    @property
    def n(self) -> int:
        return self.shape[0] * self.shape[1]


def tokenize(features: Tensor, mask: Tensor) -> tuple[TokenGrid, Tensor]:
    '''
    flatten features [N, c, h, w] and mask [N, 1, h, w] to tokens [N, n, c] and [N, n, 1]
    '''
    check_shape('tokenize', features, 4)
    n, c, h, w = features.shape
    if mask.shape != (n, 1, h, w):
        raise ShapeError('tokenize', 'mask must be [N, 1, h, w] at feature resolution', (features.shape, mask.shape))
    tokens = features.reshape(n, c, h * w).transpose(0, 2, 1)
    mask_tokens = mask.reshape(n, 1, h * w).transpose(0, 2, 1)
    return TokenGrid(tokens, (h, w)), mask_tokens


def detokenize(grid: TokenGrid) -> Tensor:
    n, _, c = grid.tokens.shape
    h, w = grid.shape
    return grid.tokens.transpose(0, 2, 1).reshape(n, c, h, w)


class PositionalEncoding(Module):
    '''
    learned table [n, c] shared by the feature and the mask stream
    '''

    def __init__(
        self,
        grid: tuple[int, int],
        channels: int,
        rng: np.random.Generator,
        policy: GridPolicy = GridPolicy.STRICT,
    ) -> None:
        super().__init__()
        self.grid = grid
        self.policy = policy
        self.table = Parameter((0.02 * rng.standard_normal((grid[0] * grid[1], channels))).astype(get_default_dtype()))

    def table_for(self, grid: tuple[int, int]) -> Tensor:
        if grid == self.grid:
            return self.table
        if self.policy is GridPolicy.STRICT:
            raise GridMismatch(self.grid, grid)
        gh, gw = self.grid
        c = self.table.shape[1]
        planes = self.table.transpose(1, 0).reshape(c, gh, gw)
        resized = F.interpolate(planes, grid, mode='bilinear')
        return resized.reshape(c, grid[0] * grid[1]).transpose(1, 0)

    def forward(self, grid: TokenGrid, mask_tokens: Tensor) -> tuple[Tensor, Tensor]:
        return add_positional(grid.tokens, mask_tokens, self.table_for(grid.shape))


def add_positional(tokens: Tensor, mask_tokens: Tensor, pe: Tensor) -> tuple[Tensor, Tensor]:
    '''
    x + pe and broadcast(m) + pe, mask tokens [N, n, 1] are broadcast to c channels first
    '''
    n, count, c = tokens.shape
    if pe.shape != (count, c):
        raise ShapeError('add_positional', 'positional table does not match the tokens', (pe.shape, tokens.shape))
    pe_full = expand(pe.reshape(1, count, c), tokens.shape)
    mask_full = expand(mask_tokens, tokens.shape) if mask_tokens.shape[-1] == 1 else mask_tokens
    return tokens + pe_full, mask_full + pe_full


class MaskedAttention(Module):
    '''
    multi-head self attention where the keys are computed from (x * m)
    '''

    def __init__(self, channels: int, heads: int, rng: np.random.Generator) -> None:
        super().__init__()
        if channels % heads:
            raise ShapeError('MaskedAttention', f'{heads} heads do not divide {channels} channels')
        self.channels = channels
        self.heads = heads
        self.query = Linear(channels, channels, rng)
        self.key = Linear(channels, channels, rng)
        self.value = Linear(channels, channels, rng)
        self.proj = Linear(channels, channels, rng)

    def _heads(self, x: Tensor) -> Tensor:
        n, count, c = x.shape
        return x.reshape(n, count, self.heads, c // self.heads).transpose(0, 2, 1, 3)

    def scores(self, tokens: Tensor, mask_tokens: Tensor) -> Tensor:
        '''
        attention map [N, heads, n, n], rows sum to one
        '''
        q = self._heads(self.query(tokens))
        k = self._heads(self.key(tokens * mask_tokens))
        return F.softmax(matmul(q, k.transpose(0, 1, 3, 2)) * (1 / math.sqrt(self.channels)), axis=-1)

    def forward(self, tokens: Tensor, mask_tokens: Tensor) -> Tensor:
        if tokens.shape != mask_tokens.shape:
            raise ShapeError('MaskedAttention', 'tokens and mask tokens differ', (tokens.shape, mask_tokens.shape))
        n, count, c = tokens.shape
        attn = self.scores(tokens, mask_tokens)
        v = self._heads(self.value(tokens))
        out = matmul(attn, v).transpose(0, 2, 1, 3).reshape(n, count, c)
        return self.proj(out)


def masked_attention(tokens: Tensor, mask_tokens: Tensor, attention: MaskedAttention) -> Tensor:
    return attention(tokens, mask_tokens)


class FeedForward(Module):
    def __init__(self, channels: int, expansion: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.expand = Linear(channels, channels * expansion, rng)
        self.contract = Linear(channels * expansion, channels, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.contract(F.leaky_relu(self.expand(x)))


class SaatLayer(Module):
    '''
    pre-norm transformer layer; the positional table enters the attention
    inputs only, so the residual stream carries the raw tokens
    '''

    def __init__(self, channels: int, config: SaatConfig, rng: np.random.Generator) -> None:
        super().__init__()
        self.norm1 = LayerNorm(channels)
        self.attention = MaskedAttention(channels, config.heads, rng)
        self.norm2 = LayerNorm(channels)
        self.ffn = FeedForward(channels, config.ffn_expansion, rng)

    def forward(self, tokens: Tensor, mask_tokens: Tensor, pe: Tensor) -> Tensor:
        x, m = add_positional(self.norm1(tokens), mask_tokens, pe)
        tokens = tokens + self.attention(x, m)
        return tokens + self.ffn(self.norm2(tokens))


class SAAT(Module):
    '''
    shadow-aware aggregation: cascaded masked-attention layers over pixel tokens
    of the deepest feature map, keys damped by the complement of the soft mask
    '''

    def __init__(
        self,
        channels: int,
        grid: tuple[int, int],
        config: SaatConfig,
        rng: np.random.Generator,
    ) -> None:
        super().__init__()
        config.validate(channels)
        self.config = config
        self.positional = PositionalEncoding(grid, channels, rng, config.grid_policy)
        self.layers = ModuleList([SaatLayer(channels, config, rng) for _ in range(config.layers)])

    def zero_outputs_(self) -> SAAT:
        '''
        zero the attention projections and the ffn contractions
        '''
        for layer in self.layers:
            layer.attention.proj.zero_()
            layer.ffn.contract.zero_()
        return self

    def forward(self, features: Tensor, guide: Tensor) -> Tensor:
        '''
        features [N, c, h, w], guide [N, 1, h, w] is the already complemented mask
        '''
        grid, mask_tokens = tokenize(features, guide)
        pe = self.positional.table_for(grid.shape)
        tokens = grid.tokens
        for layer in self.layers:
            tokens = layer(tokens, mask_tokens, pe)
        return detokenize(TokenGrid(tokens, grid.shape))


def saat_forward(features: Tensor, guide: Tensor, block: SAAT) -> Tensor:
    return block(features, guide)


__all__ = [
    'FeedForward',
    'MaskedAttention',
    'PositionalEncoding',
    'SAAT',
    'SaatLayer',
    'TokenGrid',
    'add_positional',
    'detokenize',
    'masked_attention',
    'saat_forward',
    'tokenize',
]
