"""
I-frame and P-frame networks: one hyperprior autoencoder per coded quantity
"""
import logging
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import torch
import torch.nn as nn
from compressai.models.utils import conv, deconv

from ssfcodec.entropy.models import (
    FactorizedPrior, GaussianConditional, LIKELIHOOD_FLOOR, SIGMA_FLOOR, TAIL_MASS, rate_bits
)
from ssfcodec.errors import ConfigurationError, InvalidArgumentError
from ssfcodec.scale_space import ScaleSpaceConfig
from ssfcodec.transforms.networks import (
    TransformConfig, TransformFamily, build_decoder, build_encoder, count_parameters
)

logger = logging.getLogger(__name__)

HYPER_DOWNSAMPLING = 4
FLOW_CHANNELS = 3


@dataclass
class CodecConfig:
    """Everything needed to rebuild a codec's architecture from a checkpoint"""
    family: str = 'flawin'
    image_channels: int = 1
    embed_dim: int = 16
    latent_channels: int = 32
    hyper_channels: int = 32
    patch_size: int = 2
    stage_depths: Sequence[int] = field(default_factory=lambda: [2, 2, 2, 2])
    num_heads: Sequence[int] = field(default_factory=lambda: [2, 4, 8, 16])
    window_size: int = 4
    flaff_expansion: float = 3.0
    scales: Sequence[float] = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0, 8.0])
    kernel_truncation: float = 3.0
    sigma_floor: float = SIGMA_FLOOR
    tail_mass: float = TAIL_MASS
    likelihood_floor: float = LIKELIHOOD_FLOOR

    def __post_init__(self):
        try:
            self.family = TransformFamily(self.family).value
        except ValueError:
            raise ConfigurationError(
                f"Unknown transform family '{self.family}', expected one of "
                f"{[f.value for f in TransformFamily]}"
            )
        self.stage_depths = [int(d) for d in self.stage_depths]
        self.num_heads = [int(h) for h in self.num_heads]
        self.scales = [float(s) for s in self.scales]
        if self.hyper_channels < 1 or self.image_channels < 1:
            raise ConfigurationError("hyper_channels and image_channels must be positive")
        # Validates the transform arithmetic eagerly
        self.transform_config(self.image_channels, self.image_channels)
        self.scale_space_config()

    @classmethod
    def from_profile(cls, profile, **overrides) -> 'CodecConfig':
        """Build from a config.py profile class, then apply keyword overrides"""
        values = dict(
            family=profile.FAMILY,
            image_channels=profile.IMAGE_CHANNELS,
            embed_dim=profile.EMBED_DIM,
            latent_channels=profile.LATENT_CHANNELS,
            hyper_channels=profile.HYPER_CHANNELS,
            patch_size=profile.PATCH_SIZE,
            stage_depths=list(profile.STAGE_DEPTHS),
            num_heads=list(profile.NUM_HEADS),
            window_size=profile.WINDOW_SIZE,
            flaff_expansion=profile.FLAFF_EXPANSION,
            scales=list(profile.SCALES),
            kernel_truncation=profile.KERNEL_TRUNCATION,
            sigma_floor=profile.SIGMA_FLOOR,
            tail_mass=profile.TAIL_MASS,
            likelihood_floor=profile.LIKELIHOOD_FLOOR,
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def from_dict(cls, data) -> 'CodecConfig':
        return cls(**data)

    def to_dict(self):
        return asdict(self)

    def transform_config(self, in_channels: int, out_channels: int) -> TransformConfig:
        return TransformConfig(
            family=self.family,
            in_channels=in_channels,
            out_channels=out_channels,
            embed_dim=self.embed_dim,
            stage_depths=self.stage_depths,
            window_size=self.window_size,
            num_heads=self.num_heads,
            patch_size=self.patch_size,
            latent_channels=self.latent_channels,
            flaff_expansion=self.flaff_expansion,
        )

    def scale_space_config(self) -> ScaleSpaceConfig:
        return ScaleSpaceConfig(tuple(self.scales), self.kernel_truncation)

    @property
    def downsampling_factor(self) -> int:
        return self.transform_config(self.image_channels, self.image_channels).downsampling_factor

    @property
    def frame_multiple(self) -> int:
        """Frame sides must be multiples of this (main transform times hyper transform)"""
        return self.downsampling_factor * HYPER_DOWNSAMPLING

    def validate_frame(self, height: int, width: int):
        multiple = self.frame_multiple
        if height % multiple or width % multiple:
            raise InvalidArgumentError(
                f"Frame size {height}x{width} must be divisible by {multiple} for this model"
            )
        self.transform_config(self.image_channels, self.image_channels).validate_input(height, width)

    def latent_shape(self, height: int, width: int):
        factor = self.downsampling_factor
        return (1, self.latent_channels, height // factor, width // factor)

    def hyper_shape(self, height: int, width: int):
        factor = self.frame_multiple
        return (1, self.hyper_channels, height // factor, width // factor)


def hyper_analysis(latent_channels: int, hyper_channels: int) -> nn.Sequential:
    return nn.Sequential(
        conv(latent_channels, hyper_channels, kernel_size=3, stride=1),
        nn.GELU(),
        conv(hyper_channels, hyper_channels),
        nn.GELU(),
        conv(hyper_channels, hyper_channels),
    )


def hyper_synthesis(hyper_channels: int, latent_channels: int) -> nn.Sequential:
    return nn.Sequential(
        deconv(hyper_channels, hyper_channels),
        nn.GELU(),
        deconv(hyper_channels, hyper_channels),
        nn.GELU(),
        conv(hyper_channels, latent_channels, kernel_size=3, stride=1),
    )


class HyperpriorAutoencoder(nn.Module):
    """g_a / g_s transform pair with an h_a / h_s hyperprior predicting the latent scales"""

    def __init__(self, transform_cfg: TransformConfig, hyper_channels: int,
                 sigma_floor: float = SIGMA_FLOOR, tail_mass: float = TAIL_MASS,
                 likelihood_floor: float = LIKELIHOOD_FLOOR):
        super().__init__()
        self.transform_cfg = transform_cfg
        latent = transform_cfg.latent_channels
        self.g_a = build_encoder(transform_cfg)
        self.g_s = build_decoder(transform_cfg)
        self.h_a = hyper_analysis(latent, hyper_channels)
        self.h_s = hyper_synthesis(hyper_channels, latent)
        self.prior = FactorizedPrior(hyper_channels, tail_mass=tail_mass, likelihood_floor=likelihood_floor)
        self.gaussian = GaussianConditional(sigma_floor, tail_mass, likelihood_floor)

    @property
    def in_channels(self) -> int:
        return self.transform_cfg.in_channels

    @property
    def out_channels(self) -> int:
        return self.transform_cfg.out_channels

    def validate_input(self, x: torch.Tensor):
        if x.dim() != 4 or x.shape[1] != self.in_channels:
            raise InvalidArgumentError(
                f"Expected (B, {self.in_channels}, H, W) input, got {tuple(x.shape)}"
            )
        height, width = x.shape[-2:]
        multiple = self.transform_cfg.downsampling_factor * HYPER_DOWNSAMPLING
        if height % multiple or width % multiple:
            raise InvalidArgumentError(
                f"Frame size {height}x{width} must be divisible by {multiple} for this model"
            )
        self.transform_cfg.validate_input(height, width)

    def scales(self, z_hat: torch.Tensor) -> torch.Tensor:
        """sigma = h_s(z_hat), bounded below by sigma_floor"""
        return self.gaussian.bound_scales(self.h_s(z_hat))

    def rate(self, y_hat: torch.Tensor, sigma: torch.Tensor, z_hat: torch.Tensor) -> torch.Tensor:
        return rate_bits(self.gaussian.likelihood(y_hat, sigma)) + rate_bits(self.prior.likelihood(z_hat))

    def parameter_counts(self):
        return {
            'analysis': count_parameters(self.g_a),
            'synthesis': count_parameters(self.g_s),
            'hyperprior': count_parameters(self.h_a) + count_parameters(self.h_s),
            'entropy_model': count_parameters(self.prior),
        }


class IFrameModel(HyperpriorAutoencoder):
    def __init__(self, cfg: CodecConfig):
        super().__init__(
            cfg.transform_config(cfg.image_channels, cfg.image_channels), cfg.hyper_channels,
            cfg.sigma_floor, cfg.tail_mass, cfg.likelihood_floor
        )


class PFrameModel(nn.Module):
    """Motion autoencoder (current + reference in, 3-channel flow out) and residual autoencoder"""

    def __init__(self, cfg: CodecConfig):
        super().__init__()
        self.scale_space = cfg.scale_space_config()
        self.motion = HyperpriorAutoencoder(
            cfg.transform_config(2 * cfg.image_channels, FLOW_CHANNELS), cfg.hyper_channels,
            cfg.sigma_floor, cfg.tail_mass, cfg.likelihood_floor
        )
        self.residual = HyperpriorAutoencoder(
            cfg.transform_config(cfg.image_channels, cfg.image_channels), cfg.hyper_channels,
            cfg.sigma_floor, cfg.tail_mass, cfg.likelihood_floor
        )


class VideoCodec(nn.Module):
    """I-frame and P-frame models of one transform family"""

    def __init__(self, cfg: CodecConfig):
        super().__init__()
        self.config = cfg
        self.iframe = IFrameModel(cfg)
        self.pframe = PFrameModel(cfg)

    @property
    def family(self) -> str:
        return self.config.family

    def autoencoders(self):
        """Named sub-networks in a fixed order"""
        return [('iframe', self.iframe), ('motion', self.pframe.motion), ('residual', self.pframe.residual)]


def build_codec(cfg: Optional[CodecConfig] = None, seed: Optional[int] = None) -> VideoCodec:
    if seed is not None:
        torch.manual_seed(seed)
    codec = VideoCodec(cfg or CodecConfig())
    logger.debug(f"Built {codec.family} codec with {count_parameters(codec)} parameters")
    return codec
