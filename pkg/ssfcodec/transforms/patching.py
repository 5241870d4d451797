"""
Token maps, patchify/unpatchify and 2x2 patch merging/splitting
"""
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ssfcodec.errors import InvalidArgumentError


@dataclass
class TokenMap:
    """tokens: (B, h*w, C) laid out row-major over an h x w grid"""
    tokens: torch.Tensor
    height: int
    width: int

    def __post_init__(self):
        if self.tokens.shape[1] != self.height * self.width:
            raise InvalidArgumentError(
                f"{self.tokens.shape[1]} tokens cannot form a {self.height}x{self.width} map"
            )

    @property
    def channels(self) -> int:
        return self.tokens.shape[-1]

    def to_map(self) -> torch.Tensor:
        """(B, h, w, C) view of the tokens"""
        return self.tokens.reshape(self.tokens.shape[0], self.height, self.width, self.channels)

    @classmethod
    def from_map(cls, x: torch.Tensor) -> 'TokenMap':
        batch, height, width, channels = x.shape
        return cls(x.reshape(batch, height * width, channels), height, width)


def patchify(frame: torch.Tensor, patch_size: int) -> TokenMap:
    """Split (B, C, H, W) into non-overlapping p x p patches, each flattened as (C, p, p)"""
    if frame.dim() == 3:
        frame = frame.unsqueeze(0)
    height, width = frame.shape[-2:]
    if height % patch_size or width % patch_size:
        raise InvalidArgumentError(
            f"Frame size {height}x{width} must be divisible by patch_size {patch_size}"
        )
    cols = F.unfold(frame, kernel_size=patch_size, stride=patch_size)  # (B, C*p*p, L)
    return TokenMap(cols.transpose(1, 2), height // patch_size, width // patch_size)


def unpatchify(tokens: TokenMap, patch_size: int) -> torch.Tensor:
    """Inverse of patchify: (B, h*w, C*p*p) -> (B, C, h*p, w*p)"""
    output_size = (tokens.height * patch_size, tokens.width * patch_size)
    return F.fold(tokens.tokens.transpose(1, 2), output_size, kernel_size=patch_size, stride=patch_size)


def _check_even(x: torch.Tensor):
    height, width = x.shape[1:3]
    if height % 2 or width % 2:
        raise InvalidArgumentError(f"Patch merging needs even sides, got {height}x{width}")


class PatchMerging(nn.Module):
    """(B, h, w, C) -> (B, h/2, w/2, 2C): concatenate each 2x2 group, then linear 4C -> 2C"""

    def __init__(self, dim):
        super().__init__()
        self.dim = dim
        self.reduction = nn.Linear(4 * dim, 2 * dim, bias=False)

    def forward(self, x):
        _check_even(x)
        x0 = x[:, 0::2, 0::2, :]
        x1 = x[:, 1::2, 0::2, :]
        x2 = x[:, 0::2, 1::2, :]
        x3 = x[:, 1::2, 1::2, :]
        return self.reduction(torch.cat([x0, x1, x2, x3], dim=-1))


class PatchSplitting(nn.Module):
    """(B, h, w, 2C) -> (B, 2h, 2w, C): linear 2C -> 4C, then de-interleave the 2x2 group"""

    def __init__(self, dim):
        super().__init__()
        self.dim = dim
        self.expansion = nn.Linear(2 * dim, 4 * dim, bias=False)

    def forward(self, x):
        batch, height, width, _ = x.shape
        x0, x1, x2, x3 = self.expansion(x).chunk(4, dim=-1)
        out = x.new_empty(batch, 2 * height, 2 * width, self.dim)
        out[:, 0::2, 0::2, :] = x0
        out[:, 1::2, 0::2, :] = x1
        out[:, 0::2, 1::2, :] = x2
        out[:, 1::2, 1::2, :] = x3
        return out


def patch_merge(x: torch.Tensor, layer: PatchMerging) -> torch.Tensor:
    return layer(x)


def patch_split(x: torch.Tensor, layer: PatchSplitting) -> torch.Tensor:
    return layer(x)
