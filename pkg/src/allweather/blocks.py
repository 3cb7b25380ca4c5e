"""Building blocks of the restoration network.

The basic unit is a blend block: input channels are split into heads, each
head runs a parallel attention/convolution module, the heads are fused by a
1x1 convolution and refined by a dual-path feed-forward network whose second
path is a depthwise convolution for local context. The attention path shrinks
the token count by pixel-unshuffling before self-attention and restores the
resolution afterwards, so no spatial information is discarded.

All tensors are [B, C, H, W]. Sub-pixel channel packing is row-major within
each r x r block, grouped by source channel.
"""

from __future__ import annotations

import torch
import torch.nn as nn
from einops import rearrange

from allweather.errors import ConfigError, ShapeError


def pixel_unshuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """[B, C, H, W] -> [B, C*r*r, H/r, W/r] by rearrangement only."""
    if x.ndim != 4:
        raise ShapeError(f"expected 4-D tensor, got {tuple(x.shape)}")
    _, _, h, w = x.shape
    if h % r or w % r:
        raise ShapeError(f"spatial dims {h}x{w} not divisible by r={r}")
    return rearrange(x, "b c (h r1) (w r2) -> b (c r1 r2) h w", r1=r, r2=r)


def pixel_shuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """Exact inverse of :func:`pixel_unshuffle`."""
    if x.ndim != 4:
        raise ShapeError(f"expected 4-D tensor, got {tuple(x.shape)}")
    if x.shape[1] % (r * r):
        raise ShapeError(f"channels {x.shape[1]} not divisible by r*r={r * r}")
    return rearrange(x, "b (c r1 r2) h w -> b c (h r1) (w r2)", r1=r, r2=r)


class ChannelLayerNorm(nn.Module):
    """Layer normalization over the channel dimension of [B, C, H, W]."""

    def __init__(self, channels: int):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = 1e-6

    def forward(self, x):
        mu = x.mean(dim=1, keepdim=True)
        var = x.var(dim=1, keepdim=True, unbiased=False)
        y = (x - mu) / torch.sqrt(var + self.eps)
        return y * self.weight[None, :, None, None] + self.bias[None, :, None, None]


class TokenSelfAttention(nn.Module):
    """Vanilla scaled dot-product self-attention over a token sequence."""

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, tokens):  # [B, N, D]
        q, k, v = self.qkv(tokens).chunk(3, dim=-1)
        attn = torch.softmax(q @ k.transpose(-2, -1) / self.dim**0.5, dim=-1)
        return self.proj(attn @ v)


class ConvAttentionModule(nn.Module):
    """Per-head unit: parallel token-attention and convolution branches.

    1x1 conv + norm -> channel split -> (unshuffle, self-attention, shuffle)
    alongside (3x3 conv, GELU, 3x3 conv) -> concat -> 1x1 conv -> residual.
    """

    def __init__(self, channels: int, reduction: int = 2):
        super().__init__()
        if channels % 2:
            raise ConfigError(f"attention/convolution split needs even channels, got {channels}")
        self.reduction = reduction
        half = channels // 2
        self.proj_in = nn.Conv2d(channels, channels, 1)
        self.norm = ChannelLayerNorm(channels)
        self.attention = TokenSelfAttention(half * reduction * reduction)
        self.conv_branch = nn.Sequential(
            nn.Conv2d(half, half, 3, padding=1),
            nn.GELU(),
            nn.Conv2d(half, half, 3, padding=1),
        )
        self.proj_out = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        y = self.norm(self.proj_in(x))
        attn_in, conv_in = y.chunk(2, dim=1)

        r = self.reduction
        packed = pixel_unshuffle(attn_in, r)
        _, d, hh, ww = packed.shape
        tokens = rearrange(packed, "b d h w -> b (h w) d")
        tokens = self.attention(tokens)
        packed = rearrange(tokens, "b (h w) d -> b d h w", h=hh, w=ww)
        attn_out = pixel_shuffle(packed, r)

        conv_out = self.conv_branch(conv_in)
        return self.proj_out(torch.cat([attn_out, conv_out], dim=1)) + x


class DualPathFFN(nn.Module):
    """Feed-forward with a parallel depthwise-conv path for local context."""

    def __init__(self, channels: int):
        super().__init__()
        if channels % 2:
            raise ConfigError(f"dual-path split needs even channels, got {channels}")
        half = channels // 2
        self.norm = ChannelLayerNorm(channels)
        self.linear = nn.Conv2d(half, half, 1)
        self.local = nn.Sequential(
            nn.Conv2d(half, half, 1),
            nn.Conv2d(half, half, 3, padding=1, groups=half),
        )
        self.act = nn.GELU()
        self.proj_out = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        y1, y2 = self.norm(x).chunk(2, dim=1)
        y1 = self.act(self.linear(y1))
        y2 = self.act(self.local(y2))
        return self.proj_out(torch.cat([y1, y2], dim=1)) + x


class BlendBlock(nn.Module):
    """Multi-head blend of attention and convolution, followed by the FFN."""

    def __init__(self, channels: int, heads: int, reduction: int = 2):
        super().__init__()
        if channels % heads:
            raise ConfigError(f"channels {channels} not divisible by {heads} heads")
        self.heads = heads
        head_ch = channels // heads
        self.head_modules = nn.ModuleList(
            ConvAttentionModule(head_ch, reduction) for _ in range(heads)
        )
        self.fuse = nn.Conv2d(channels, channels, 1)
        self.ffn = DualPathFFN(channels)

    def forward(self, x):
        parts = x.chunk(self.heads, dim=1)
        blended = torch.cat([m(p) for m, p in zip(self.head_modules, parts)], dim=1)
        return self.ffn(self.fuse(blended))


class Downsample(nn.Module):
    """Halve spatial dims, double channels (strided 3x3 convolution)."""

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Conv2d(channels, channels * 2, 3, stride=2, padding=1)

    def forward(self, x):
        return self.body(x)


class Upsample(nn.Module):
    """Double spatial dims, halve channels (conv + sub-pixel shuffle)."""

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Conv2d(channels, channels * 2, 3, padding=1)

    def forward(self, x):
        return pixel_shuffle(self.body(x), 2)
