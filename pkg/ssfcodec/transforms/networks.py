"""
Analysis / synthesis transforms for the three families (conv, swin, flawin)
"""
import enum
import logging
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import torch.nn as nn
from compressai.models.utils import conv, deconv

from ssfcodec.errors import ConfigurationError, InvalidArgumentError
from ssfcodec.transforms.blocks import BlockPair, expanded_channels
from ssfcodec.transforms.patching import (
    TokenMap, PatchMerging, PatchSplitting, patchify, unpatchify
)

logger = logging.getLogger(__name__)


class TransformFamily(str, enum.Enum):
    CONV = 'conv'
    SWIN = 'swin'
    FLAWIN = 'flawin'


@dataclass
class TransformConfig:
    family: TransformFamily = TransformFamily.FLAWIN
    in_channels: int = 1
    out_channels: Optional[int] = None
    embed_dim: int = 16
    stage_depths: Sequence[int] = field(default_factory=lambda: [2, 2, 2, 2])
    window_size: int = 4
    num_heads: Sequence[int] = field(default_factory=lambda: [2, 4, 8, 16])
    patch_size: int = 2
    latent_channels: int = 32
    flaff_expansion: float = 3.0
    mlp_ratio: float = 4.0

    def __post_init__(self):
        try:
            self.family = TransformFamily(self.family)
        except ValueError:
            raise ConfigurationError(
                f"Unknown transform family '{self.family}', expected one of "
                f"{[f.value for f in TransformFamily]}"
            )
        if self.out_channels is None:
            self.out_channels = self.in_channels
        self.stage_depths = list(self.stage_depths)
        self.num_heads = list(self.num_heads)
        self.validate()

    @property
    def num_stages(self) -> int:
        return len(self.stage_depths)

    @property
    def downsampling_factor(self) -> int:
        if self.family is TransformFamily.CONV:
            return 2 ** self.num_stages
        return self.patch_size * 2 ** (self.num_stages - 1)

    def stage_dim(self, stage: int) -> int:
        return self.embed_dim * 2 ** stage

    def validate(self):
        if self.num_stages < 1:
            raise ConfigurationError("At least one stage is required")
        if min(self.in_channels, self.out_channels, self.embed_dim, self.latent_channels) < 1:
            raise ConfigurationError("Channel counts must be positive")
        if self.family is TransformFamily.CONV:
            return
        if self.patch_size < 1 or self.window_size < 1:
            raise ConfigurationError("patch_size and window_size must be positive")
        if len(self.num_heads) != self.num_stages:
            raise ConfigurationError(
                f"num_heads has {len(self.num_heads)} entries for {self.num_stages} stages"
            )
        for stage, (depth, heads) in enumerate(zip(self.stage_depths, self.num_heads)):
            dim = self.stage_dim(stage)
            if depth < 2 or depth % 2:
                raise ConfigurationError(
                    f"Stage {stage} depth {depth} must be a positive even number (blocks come in W/SW pairs)"
                )
            if dim % heads:
                raise ConfigurationError(
                    f"Stage {stage} width {dim} is not divisible by {heads} heads"
                )
            if self.family is TransformFamily.FLAWIN and expanded_channels(dim, self.flaff_expansion) % 3:
                raise ConfigurationError(
                    f"Stage {stage}: FLaFF width round({dim} * {self.flaff_expansion}) "
                    f"must be divisible by 3"
                )

    def validate_input(self, height: int, width: int):
        """Reject frame sizes the patch / merge / window arithmetic cannot tile"""
        factor = self.downsampling_factor
        if height % factor or width % factor:
            raise InvalidArgumentError(
                f"Input {height}x{width} must be divisible by the downsampling factor {factor}"
            )
        if self.family is TransformFamily.CONV:
            return
        for stage in range(self.num_stages):
            side_h = height // (self.patch_size * 2 ** stage)
            side_w = width // (self.patch_size * 2 ** stage)
            if side_h % self.window_size or side_w % self.window_size:
                raise InvalidArgumentError(
                    f"Stage {stage} token map {side_h}x{side_w} must be divisible by "
                    f"window size {self.window_size}"
                )

    def to_dict(self):
        data = asdict(self)
        data['family'] = self.family.value
        return data


def _ffn_kind(cfg: TransformConfig) -> str:
    return 'flaff' if cfg.family is TransformFamily.FLAWIN else 'mlp'


class TransformerEncoder(nn.Module):
    """Patchify -> linear embedding -> [block pairs -> patch merge] per stage -> latent projection"""

    def __init__(self, cfg: TransformConfig):
        super().__init__()
        self.cfg = cfg
        p = cfg.patch_size
        self.embedding = nn.Linear(cfg.in_channels * p * p, cfg.embed_dim)
        self.stages = nn.ModuleList()
        self.merges = nn.ModuleList()
        for stage, depth in enumerate(cfg.stage_depths):
            dim = cfg.stage_dim(stage)
            self.stages.append(nn.Sequential(*[
                BlockPair(dim, cfg.num_heads[stage], cfg.window_size, _ffn_kind(cfg),
                          cfg.mlp_ratio, cfg.flaff_expansion)
                for _ in range(depth // 2)
            ]))
            if stage < cfg.num_stages - 1:
                self.merges.append(PatchMerging(dim))
        self.projection = nn.Linear(cfg.stage_dim(cfg.num_stages - 1), cfg.latent_channels)

    def forward(self, x):
        self.cfg.validate_input(*x.shape[-2:])
        tokens = patchify(x, self.cfg.patch_size)
        z = self.embedding(tokens.to_map())
        for stage, blocks in enumerate(self.stages):
            z = blocks(z)
            if stage < len(self.merges):
                z = self.merges[stage](z)
        return self.projection(z).permute(0, 3, 1, 2).contiguous()


class TransformerDecoder(nn.Module):
    """Mirror of TransformerEncoder: latent projection -> [block pairs -> patch split] -> unpatchify"""

    def __init__(self, cfg: TransformConfig):
        super().__init__()
        self.cfg = cfg
        p = cfg.patch_size
        last = cfg.num_stages - 1
        self.projection = nn.Linear(cfg.latent_channels, cfg.stage_dim(last))
        self.stages = nn.ModuleList()
        self.splits = nn.ModuleList()
        for stage in reversed(range(cfg.num_stages)):
            dim = cfg.stage_dim(stage)
            self.stages.append(nn.Sequential(*[
                BlockPair(dim, cfg.num_heads[stage], cfg.window_size, _ffn_kind(cfg),
                          cfg.mlp_ratio, cfg.flaff_expansion)
                for _ in range(cfg.stage_depths[stage] // 2)
            ]))
            if stage > 0:
                self.splits.append(PatchSplitting(cfg.stage_dim(stage - 1)))
        self.unembedding = nn.Linear(cfg.embed_dim, cfg.out_channels * p * p)

    def forward(self, y):
        z = self.projection(y.permute(0, 2, 3, 1))
        for index, blocks in enumerate(self.stages):
            z = blocks(z)
            if index < len(self.splits):
                z = self.splits[index](z)
        tokens = TokenMap.from_map(self.unembedding(z))
        return unpatchify(tokens, self.cfg.patch_size)


class ConvEncoder(nn.Sequential):
    """Stride-2 5x5 convolutions with GELU between, one per stage"""

    def __init__(self, cfg: TransformConfig):
        layers = []
        channels = cfg.in_channels
        for stage in range(cfg.num_stages):
            last = stage == cfg.num_stages - 1
            out = cfg.latent_channels if last else cfg.embed_dim
            layers.append(conv(channels, out))
            if not last:
                layers.append(nn.GELU())
            channels = out
        super().__init__(*layers)
        self.cfg = cfg

    def forward(self, x):
        self.cfg.validate_input(*x.shape[-2:])
        return super().forward(x)


class ConvDecoder(nn.Sequential):
    def __init__(self, cfg: TransformConfig):
        layers = []
        channels = cfg.latent_channels
        for stage in range(cfg.num_stages):
            last = stage == cfg.num_stages - 1
            out = cfg.out_channels if last else cfg.embed_dim
            layers.append(deconv(channels, out))
            if not last:
                layers.append(nn.GELU())
            channels = out
        super().__init__(*layers)
        self.cfg = cfg


def build_encoder(cfg: TransformConfig) -> nn.Module:
    if cfg.family is TransformFamily.CONV:
        return ConvEncoder(cfg)
    return TransformerEncoder(cfg)


def build_decoder(cfg: TransformConfig) -> nn.Module:
    if cfg.family is TransformFamily.CONV:
        return ConvDecoder(cfg)
    return TransformerDecoder(cfg)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
