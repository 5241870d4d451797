"""
Swin / FLaWin transformer blocks and their feed-forward networks
"""
import torch
import torch.nn as nn
import torch.nn.functional as F

from ssfcodec.errors import ConfigurationError, InvalidArgumentError
from ssfcodec.transforms.attention import (
    WindowAttention, window_partition, window_reverse, shifted_window_mask
)


class Mlp(nn.Module):
    """Swin FFN: linear C -> hidden, GELU, linear hidden -> C"""

    def __init__(self, dim, hidden_dim):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden_dim)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden_dim, dim)

    @property
    def output_projection(self) -> nn.Linear:
        return self.fc2

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


def ffn_mlp(tokens: torch.Tensor, mlp: Mlp) -> torch.Tensor:
    return mlp(tokens)


class InceptionBlock(nn.Module):
    """Three equal channel groups, each through its own 3x3 depthwise conv (replicate padding)"""

    def __init__(self, channels, kernel_size=3):
        super().__init__()
        if channels % 3:
            raise ConfigurationError(f"Inception block needs channels divisible by 3, got {channels}")
        self.group = channels // 3
        self.kernel_size = kernel_size
        self.branches = nn.ModuleList([
            nn.Conv2d(self.group, self.group, kernel_size, groups=self.group)
            for _ in range(3)
        ])

    def forward(self, x):
        """x: (B, C, H, W)"""
        if x.shape[1] != 3 * self.group:
            raise InvalidArgumentError(f"Expected {3 * self.group} channels, got {x.shape[1]}")
        pad = self.kernel_size // 2
        x = F.pad(x, (pad, pad, pad, pad), mode='replicate')
        parts = x.split(self.group, dim=1)
        return torch.cat([branch(part) for branch, part in zip(self.branches, parts)], dim=1)


def inception_block(x: torch.Tensor, block: InceptionBlock) -> torch.Tensor:
    return block(x)


def expanded_channels(dim: int, expansion: float) -> int:
    return int(round(dim * expansion))


class FLaFF(nn.Module):
    """
    Fused local-aware feed-forward: pointwise C -> C_e, 2-D reshape,
    Inception block, flatten, pointwise C_e -> C
    """

    def __init__(self, dim, expansion=3.0, act_layer=nn.GELU):
        super().__init__()
        hidden = expanded_channels(dim, expansion)
        if hidden % 3:
            raise ConfigurationError(
                f"FLaFF expanded width round({dim} * {expansion}) = {hidden} is not divisible by 3"
            )
        self.hidden_dim = hidden
        self.project_in = nn.Linear(dim, hidden)
        self.act_in = act_layer()
        self.inception = InceptionBlock(hidden)
        self.act_out = act_layer()
        self.project_out = nn.Linear(hidden, dim)

    @property
    def output_projection(self) -> nn.Linear:
        return self.project_out

    def forward(self, x):
        """x: (B, H, W, C) token map"""
        x = self.act_in(self.project_in(x))
        x = self.inception(x.permute(0, 3, 1, 2))
        x = self.act_out(x).permute(0, 2, 3, 1)
        return self.project_out(x)


def flaff(tokens: torch.Tensor, module: FLaFF) -> torch.Tensor:
    return module(tokens)


class TransformerBlock(nn.Module):
    """LN -> (S)W-MSA -> residual, LN -> FFN -> residual; FFN is an MLP (Swin) or FLaFF (FLaWin)"""

    def __init__(self, dim, num_heads, window_size, shift_size=0, ffn='mlp',
                 mlp_ratio=4.0, flaff_expansion=3.0):
        super().__init__()
        if not 0 <= shift_size < window_size:
            raise ConfigurationError(f"shift_size {shift_size} must lie in [0, {window_size})")
        self.dim = dim
        self.window_size = window_size
        self.shift_size = shift_size
        self.ffn_kind = ffn

        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, num_heads, window_size)
        self.norm2 = nn.LayerNorm(dim)
        if ffn == 'mlp':
            self.ffn = Mlp(dim, expanded_channels(dim, mlp_ratio))
        elif ffn == 'flaff':
            self.ffn = FLaFF(dim, flaff_expansion)
        else:
            raise ConfigurationError(f"Unknown feed-forward kind '{ffn}'")

    def effective_shift(self, height, width) -> int:
        # a map no larger than one window has nothing to shift across
        if min(height, width) <= self.window_size:
            return 0
        return self.shift_size

    def attention(self, x):
        """Windowed attention over a normalized (B, H, W, C) map, with cyclic shift when enabled"""
        _, height, width, _ = x.shape
        if height % self.window_size or width % self.window_size:
            raise InvalidArgumentError(
                f"Token map {height}x{width} must be divisible by window size {self.window_size}"
            )
        shift = self.effective_shift(height, width)
        if shift:
            x = torch.roll(x, shifts=(-shift, -shift), dims=(1, 2))
        mask = shifted_window_mask(height, width, self.window_size, shift, dtype=x.dtype, device=x.device)
        windows = self.attn(window_partition(x, self.window_size), mask)
        x = window_reverse(windows, self.window_size, height, width)
        if shift:
            x = torch.roll(x, shifts=(shift, shift), dims=(1, 2))
        return x

    def forward(self, x):
        x = x + self.attention(self.norm1(x))
        return x + self.ffn(self.norm2(x))


class BlockPair(nn.Module):
    """Two consecutive blocks: W-MSA then SW-MSA shifted by floor(M/2)"""

    def __init__(self, dim, num_heads, window_size, ffn='mlp', mlp_ratio=4.0, flaff_expansion=3.0):
        super().__init__()
        self.regular = TransformerBlock(dim, num_heads, window_size, 0, ffn, mlp_ratio, flaff_expansion)
        self.shifted = TransformerBlock(dim, num_heads, window_size, window_size // 2, ffn,
                                        mlp_ratio, flaff_expansion)

    def forward(self, x):
        return self.shifted(self.regular(x))


def swin_block_pair(z: torch.Tensor, pair: BlockPair) -> torch.Tensor:
    return pair(z)
