"""
Training-time noise relaxation and test-time rounding
"""
from typing import Optional

import torch

from ssfcodec.errors import InvalidArgumentError


def quantize_train(y: torch.Tensor, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """y + u, u ~ U[-0.5, 0.5); the noise is a constant for autograd"""
    noise = torch.rand(y.shape, generator=generator, dtype=y.dtype, device=y.device) - 0.5
    return y + noise


def quantize_test(y: torch.Tensor) -> torch.Tensor:
    """Round half away from zero; integral values in the input dtype"""
    return torch.sign(y) * torch.floor(torch.abs(y) + 0.5)


def quantize(y: torch.Tensor, mode: str, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    if mode == 'train':
        return quantize_train(y, generator)
    if mode == 'test':
        return quantize_test(y)
    raise InvalidArgumentError(f"Unknown quantization mode '{mode}', expected 'train' or 'test'")
