"""
Scale-space volumes and trilinear scale-space warping
"""
import math
import logging
from dataclasses import dataclass
from typing import List, Sequence

import torch
import torch.nn.functional as F

from ssfcodec.errors import ConfigurationError, InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_SCALES = (0.5, 1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True)
class ScaleSpaceConfig:
    """Blur standard deviations s_1 < ... < s_M (pixels) and kernel truncation"""
    scales: Sequence[float] = DEFAULT_SCALES
    kernel_truncation: float = 3.0

    def __post_init__(self):
        scales = tuple(float(s) for s in self.scales)
        object.__setattr__(self, 'scales', scales)
        if any(s <= 0 for s in scales):
            raise ConfigurationError(f"Scales must be positive, got {list(scales)}")
        if any(b <= a for a, b in zip(scales, scales[1:])):
            raise ConfigurationError(f"Scales must be strictly increasing, got {list(scales)}")
        if self.kernel_truncation <= 0:
            raise ConfigurationError("kernel_truncation must be positive")

    @property
    def num_scales(self) -> int:
        return len(self.scales)


@dataclass
class ScaleSpaceVolume:
    """data: (B, M+1, C, H, W); slice 0 is the unblurred source"""
    data: torch.Tensor
    config: ScaleSpaceConfig

    @property
    def num_slices(self) -> int:
        return self.data.shape[1]

    @property
    def spatial_shape(self):
        return tuple(self.data.shape[-2:])

    def slice(self, index: int) -> torch.Tensor:
        return self.data[:, index]


@dataclass
class FlowField:
    """Horizontal / vertical displacement in pixels and scale coordinate, each (B, H, W)"""
    fx: torch.Tensor
    fy: torch.Tensor
    fz: torch.Tensor

    @classmethod
    def from_decoder_output(cls, raw: torch.Tensor, num_scales: int) -> 'FlowField':
        """Map a 3-channel decoder output onto a flow; Fz = M * sigmoid(raw scale logit)"""
        if raw.dim() != 4 or raw.shape[1] != 3:
            raise InvalidArgumentError(f"Expected (B, 3, H, W) flow output, got {tuple(raw.shape)}")
        return cls(raw[:, 0], raw[:, 1], num_scales * torch.sigmoid(raw[:, 2]))

    @classmethod
    def zeros(cls, batch, height, width, dtype=torch.float32, device=None) -> 'FlowField':
        z = torch.zeros(batch, height, width, dtype=dtype, device=device)
        return cls(z, z.clone(), z.clone())

    def stack(self) -> torch.Tensor:
        return torch.stack([self.fx, self.fy, self.fz], dim=1)

    @property
    def spatial_shape(self):
        return tuple(self.fx.shape[-2:])


def _gaussian_kernel1d(s: float, truncation: float, dtype=torch.float64, device=None) -> torch.Tensor:
    half = int(math.ceil(truncation * s))
    k = torch.arange(-half, half + 1, dtype=dtype, device=device)
    pdf = torch.exp(-0.5 * (k / s) ** 2)
    return pdf / pdf.sum()


def gaussian_kernel(s: float, truncation: float = 3.0, dtype=torch.float64, device=None) -> torch.Tensor:
    """Normalized square 2-D Gaussian of side 2*ceil(truncation*s)+1"""
    if not s > 0:
        raise InvalidArgumentError(f"Gaussian scale must be positive, got {s}")
    if not truncation > 0:
        raise InvalidArgumentError(f"Kernel truncation must be positive, got {truncation}")
    k1 = _gaussian_kernel1d(s, truncation, dtype=dtype, device=device)
    kernel = torch.outer(k1, k1)
    return kernel / kernel.sum()


def gaussian_blur(x: torch.Tensor, s: float, truncation: float = 3.0) -> torch.Tensor:
    """Separable blur of (B, C, H, W) with edge-replicating padding"""
    k1 = _gaussian_kernel1d(s, truncation, dtype=x.dtype, device=x.device)
    half = k1.numel() // 2
    channels = x.shape[1]
    horizontal = k1.view(1, 1, 1, -1).expand(channels, 1, 1, k1.numel())
    vertical = k1.view(1, 1, -1, 1).expand(channels, 1, k1.numel(), 1)
    x = F.conv2d(F.pad(x, (half, half, 0, 0), mode='replicate'), horizontal, groups=channels)
    x = F.conv2d(F.pad(x, (0, 0, half, half), mode='replicate'), vertical, groups=channels)
    return x


def build_volume(frame: torch.Tensor, cfg: ScaleSpaceConfig) -> ScaleSpaceVolume:
    """Stack the frame with its blurred copies; accepts (C, H, W) or (B, C, H, W)"""
    if frame.dim() == 3:
        frame = frame.unsqueeze(0)
    if frame.dim() != 4:
        raise InvalidArgumentError(f"Expected (B, C, H, W) frame, got {tuple(frame.shape)}")
    slices: List[torch.Tensor] = [frame]
    for s in cfg.scales:
        slices.append(gaussian_blur(frame, s, cfg.kernel_truncation))
    return ScaleSpaceVolume(torch.stack(slices, dim=1), cfg)


def _normalize(coord: torch.Tensor, size: int) -> torch.Tensor:
    # align_corners=True: index 0 -> -1, index size-1 -> +1
    if size == 1:
        return torch.zeros_like(coord)
    return coord * (2.0 / (size - 1)) - 1.0


def warp(volume: ScaleSpaceVolume, flow: FlowField) -> torch.Tensor:
    """
    Trilinear sample of the volume at (x + Fx, y + Fy, Fz).
    Spatial out-of-bounds samples clamp to the edge; Fz is clamped to [0, M].
    """
    data = volume.data
    batch, num_slices, channels, height, width = data.shape
    if flow.spatial_shape != (height, width):
        raise InvalidArgumentError(
            f"Flow shape {flow.spatial_shape} does not match volume shape {(height, width)}"
        )
    fx, fy, fz = flow.fx, flow.fy, flow.fz
    if fx.dim() == 2:
        fx, fy, fz = fx.unsqueeze(0), fy.unsqueeze(0), fz.unsqueeze(0)
    if fx.shape[0] != batch:
        raise InvalidArgumentError(f"Flow batch {fx.shape[0]} does not match volume batch {batch}")

    ys, xs = torch.meshgrid(
        torch.arange(height, dtype=data.dtype, device=data.device),
        torch.arange(width, dtype=data.dtype, device=data.device),
        indexing='ij'
    )
    max_scale = num_slices - 1
    gx = _normalize(xs.unsqueeze(0) + fx, width)
    gy = _normalize(ys.unsqueeze(0) + fy, height)
    gz = _normalize(fz.clamp(0, max_scale), num_slices)
    grid = torch.stack([gx, gy, gz], dim=-1).unsqueeze(1)  # (B, 1, H, W, 3)

    source = data.permute(0, 2, 1, 3, 4)  # (B, C, M+1, H, W)
    out = F.grid_sample(source, grid, mode='bilinear', padding_mode='border', align_corners=True)
    return out.squeeze(2)
