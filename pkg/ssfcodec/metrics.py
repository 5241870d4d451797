"""
PSNR and bits-per-pixel
"""
import math
from typing import Union

import torch

from ssfcodec.codec.bitstream import Bitstream, HEADER_SIZE
from ssfcodec.errors import InvalidArgumentError

PSNR_CAP_DB = 100.0


def mse(x: torch.Tensor, y: torch.Tensor) -> float:
    if x.shape != y.shape:
        raise InvalidArgumentError(f"Shapes differ: {tuple(x.shape)} vs {tuple(y.shape)}")
    return float(torch.mean((x.double() - y.double()) ** 2))


def psnr(x: torch.Tensor, y: torch.Tensor, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE); identical frames give +inf"""
    error = mse(x, y)
    if error == 0.0:
        return math.inf
    return 10.0 * math.log10(peak ** 2 / error)


def capped_psnr(value: float, cap: float = PSNR_CAP_DB) -> float:
    return min(value, cap)


def bpp(stream: Union[Bitstream, bytes, int], frames: int, height: int, width: int,
        include_header: bool = True) -> float:
    """
    8 * bytes / (frames * height * width). stream may be a Bitstream, raw bytes
    or a byte count; the header is subtracted when include_header is False.
    """
    if min(frames, height, width) < 1:
        raise InvalidArgumentError("frames, height and width must be positive")
    if isinstance(stream, Bitstream):
        total = stream.total_bytes
    elif isinstance(stream, (bytes, bytearray)):
        total = len(stream)
    else:
        total = int(stream)
    size = total if include_header else total - HEADER_SIZE
    return 8.0 * size / (frames * height * width)
