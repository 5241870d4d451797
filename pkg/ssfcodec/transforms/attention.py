"""
Window multi-head self-attention with a learnable relative position bias
"""
import math
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from ssfcodec.errors import ConfigurationError, InvalidArgumentError


def relative_position_index(window_size: int) -> torch.Tensor:
    """(N, N) map from token-pair offsets into the flattened (2M-1)x(2M-1) bias table"""
    coords = torch.stack(torch.meshgrid(
        torch.arange(window_size), torch.arange(window_size), indexing='ij'
    )).flatten(1)  # (2, N)
    relative = coords[:, :, None] - coords[:, None, :]  # (2, N, N)
    relative = relative.permute(1, 2, 0) + (window_size - 1)
    return relative[..., 0] * (2 * window_size - 1) + relative[..., 1]


def window_partition(x: torch.Tensor, window_size: int) -> torch.Tensor:
    """(B, H, W, C) -> (B * num_windows, M*M, C)"""
    batch, height, width, channels = x.shape
    x = x.view(batch, height // window_size, window_size, width // window_size, window_size, channels)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window_size * window_size, channels)


def window_reverse(windows: torch.Tensor, window_size: int, height: int, width: int) -> torch.Tensor:
    """(B * num_windows, M*M, C) -> (B, H, W, C)"""
    channels = windows.shape[-1]
    batch = windows.shape[0] // ((height // window_size) * (width // window_size))
    x = windows.view(batch, height // window_size, width // window_size, window_size, window_size, channels)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(batch, height, width, channels)


def shifted_window_mask(height: int, width: int, window_size: int, shift_size: int,
                        dtype=torch.float32, device=None) -> Optional[torch.Tensor]:
    """Additive (num_windows, N, N) mask: -inf between tokens from different pre-shift regions"""
    if shift_size == 0:
        return None
    regions = torch.zeros(1, height, width, 1, device=device)
    label = 0
    bands = (slice(0, -window_size), slice(-window_size, -shift_size), slice(-shift_size, None))
    for hs in bands:
        for ws in bands:
            regions[:, hs, ws, :] = label
            label += 1
    windows = window_partition(regions, window_size).squeeze(-1)  # (nW, N)
    different = windows.unsqueeze(1) != windows.unsqueeze(2)
    mask = torch.zeros(different.shape, dtype=dtype, device=device)
    return mask.masked_fill(different, float('-inf'))


def window_attention(x: torch.Tensor, qkv_weight: torch.Tensor, qkv_bias: Optional[torch.Tensor],
                     proj_weight: torch.Tensor, proj_bias: Optional[torch.Tensor],
                     position_bias: torch.Tensor, num_heads: int,
                     mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    softmax(Q K^T / sqrt(d) + B) V per head, heads concatenated then projected.

    x: (B_, N, C) windows; position_bias: (heads, N, N); mask: (num_windows, N, N) or None.
    """
    windows, tokens, channels = x.shape
    if channels % num_heads:
        raise ConfigurationError(f"Channels {channels} not divisible by {num_heads} heads")
    if position_bias.shape != (num_heads, tokens, tokens):
        raise ConfigurationError(
            f"Position bias shape {tuple(position_bias.shape)} does not match "
            f"{num_heads} heads over {tokens} tokens"
        )
    head_dim = channels // num_heads
    qkv = F.linear(x, qkv_weight, qkv_bias)
    qkv = qkv.reshape(windows, tokens, 3, num_heads, head_dim).permute(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]  # (B_, heads, N, d)

    attn = (q @ k.transpose(-2, -1)) / math.sqrt(head_dim)
    attn = attn + position_bias.unsqueeze(0)
    if mask is not None:
        num_windows = mask.shape[0]
        attn = attn.view(windows // num_windows, num_windows, num_heads, tokens, tokens)
        attn = attn + mask.unsqueeze(1).unsqueeze(0)
        attn = attn.view(windows, num_heads, tokens, tokens)
    attn = attn.softmax(dim=-1)

    out = (attn @ v).transpose(1, 2).reshape(windows, tokens, channels)
    return F.linear(out, proj_weight, proj_bias)


class WindowAttention(nn.Module):
    """W-MSA over M x M windows; the bias table B' holds one (2M-1)x(2M-1) grid per head"""

    def __init__(self, dim, num_heads, window_size, qkv_bias=True):
        super().__init__()
        if dim % num_heads:
            raise ConfigurationError(f"Embedding dim {dim} not divisible by {num_heads} heads")
        self.dim = dim
        self.num_heads = num_heads
        self.window_size = window_size

        self.qkv = nn.Linear(dim, dim * 3, bias=qkv_bias)
        self.proj = nn.Linear(dim, dim)
        self.relative_position_bias_table = nn.Parameter(
            torch.zeros(num_heads, 2 * window_size - 1, 2 * window_size - 1)
        )
        nn.init.trunc_normal_(self.relative_position_bias_table, std=.02)
        self.register_buffer('relative_position_index', relative_position_index(window_size), persistent=False)

    def relative_position_bias(self) -> torch.Tensor:
        """B: (heads, N, N) gathered from B'"""
        table = self.relative_position_bias_table.flatten(1)
        return table[:, self.relative_position_index]

    def forward(self, x, mask=None):
        if x.shape[1] != self.window_size ** 2:
            raise InvalidArgumentError(
                f"Window holds {x.shape[1]} tokens, expected {self.window_size ** 2}"
            )
        return window_attention(
            x, self.qkv.weight, self.qkv.bias, self.proj.weight, self.proj.bias,
            self.relative_position_bias(), self.num_heads, mask
        )
