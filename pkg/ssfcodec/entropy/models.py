"""
Likelihood models: zero-mean Gaussian conditional for y, factorized prior for z.

Both sit on compressai's entropy models. Symbols are rounded by the caller
before any likelihood is taken, so the models only score values and build
coding tables; the prior's median is pinned at zero so its tables describe
the same integer grid the symbols live on.
"""
import math
import logging
from functools import lru_cache
from typing import Optional, Sequence

import torch
from compressai.entropy_models import EntropyBottleneck
from compressai.entropy_models import GaussianConditional as ScaleConditional

from ssfcodec.errors import ConfigurationError, InvalidArgumentError

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 0.11
SCALE_MAX = 64.0
SCALE_LEVELS = 64
LIKELIHOOD_FLOOR = 2.0 ** -32
TAIL_MASS = 1e-9
SUPPORT_LIMIT = 128

# Rebuilt from the learned parameters before coding; never stored or hashed
DERIVED_STATE = ('quantiles', '_offset', '_quantized_cdf', '_cdf_length')


def is_derived_state(name: str) -> bool:
    return name.rsplit('.', 1)[-1] in DERIVED_STATE


def get_scale_table(sigma_floor: float = SIGMA_FLOOR, sigma_max: float = SCALE_MAX,
                    levels: int = SCALE_LEVELS) -> torch.Tensor:
    return torch.exp(torch.linspace(math.log(sigma_floor), math.log(sigma_max), levels))


def rate_bits(p: torch.Tensor) -> torch.Tensor:
    """Sum of -log2 p"""
    return torch.sum(-torch.log2(p))


class GaussianConditional(ScaleConditional):
    """Zero-mean Gaussian entropy model for y given the hyper-synthesis scales"""

    def __init__(self, sigma_floor: float = SIGMA_FLOOR, tail_mass: float = TAIL_MASS,
                 likelihood_floor: float = LIKELIHOOD_FLOOR, scale_table: Optional[Sequence[float]] = None):
        if sigma_floor <= 0:
            raise ConfigurationError("sigma_floor must be positive")
        if scale_table is None:
            scale_table = get_scale_table(sigma_floor)
        scale_table = [float(s) for s in scale_table]
        try:
            super().__init__(scale_table, scale_bound=sigma_floor, tail_mass=tail_mass,
                             likelihood_bound=likelihood_floor)
        except ValueError as e:
            raise ConfigurationError(f"Invalid scale table: {e}")
        self.sigma_floor = float(sigma_floor)

    def bound_scales(self, sigma: torch.Tensor) -> torch.Tensor:
        return self.lower_bound_scale(sigma)

    def likelihood(self, values: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
        """Unit-bin mass of N(0, sigma^2) around each value, floored for log stability"""
        return self.likelihood_lower_bound(self._likelihood(values, sigma))

    def update_tables(self):
        self.update()


class FactorizedPrior(EntropyBottleneck):
    """
    Per-channel non-parametric density for z on the integer grid.

    The coding support per channel is fitted from the learned cumulative so
    that at most tail_mass / 2 falls outside each end.
    """

    def __init__(self, channels: int, filters: Sequence[int] = (3, 3, 3), init_scale: float = 10.0,
                 tail_mass: float = TAIL_MASS, likelihood_floor: float = LIKELIHOOD_FLOOR,
                 support_limit: int = SUPPORT_LIMIT):
        super().__init__(int(channels), tail_mass=tail_mass, init_scale=init_scale,
                         filters=tuple(int(f) for f in filters), likelihood_bound=likelihood_floor)
        self.support_limit = int(support_limit)
        self.quantiles.requires_grad_(False)

    def cdf(self, inputs: torch.Tensor) -> torch.Tensor:
        """inputs: (channels, 1, N) -> learned cumulative at those points"""
        return torch.sigmoid(self._logits_cumulative(inputs, stop_gradient=False))

    def likelihood(self, z: torch.Tensor) -> torch.Tensor:
        """z: (B, channels, H, W) -> per-element bin probability"""
        batch, channels, height, width = z.shape
        if channels != self.channels:
            raise InvalidArgumentError(f"Prior has {self.channels} channels, got {channels}")
        values = z.permute(1, 0, 2, 3).reshape(channels, 1, -1)
        p, _, _ = self._likelihood(values)
        p = p.reshape(channels, batch, height, width).permute(1, 0, 2, 3)
        return self.likelihood_lower_bound(p)

    @torch.no_grad()
    def fit_support(self):
        """Set the quantiles to [lower, 0, upper] per channel from the learned cumulative"""
        limit = self.support_limit
        grid = torch.arange(-limit, limit + 1, dtype=self.quantiles.dtype, device=self.quantiles.device)
        grid = grid.view(1, 1, -1).expand(self.channels, 1, -1)
        half_tail = self.tail_mass / 2.0
        below = torch.sigmoid(self._logits_cumulative(grid - 0.5, stop_gradient=True))[:, 0, :]
        above = torch.sigmoid(-self._logits_cumulative(grid + 0.5, stop_gradient=True))[:, 0, :]
        lower = ((below <= half_tail).sum(dim=1) - 1 - limit).clamp(-limit, 0)
        upper = (limit + 1 - (above <= half_tail).sum(dim=1)).clamp(0, limit)
        quantiles = torch.stack([lower, torch.zeros_like(lower), upper], dim=1).unsqueeze(1)
        self.quantiles.copy_(quantiles.to(self.quantiles.dtype))
        if bool((lower == -limit).any() or (upper == limit).any()):
            logger.debug(f"Prior support reached the limit of {limit}; outliers will be escaped")

    def update_tables(self):
        self.fit_support()
        self.update(force=True)


@lru_cache(maxsize=None)
def _reference_gaussian(dtype: torch.dtype, device: torch.device) -> GaussianConditional:
    return GaussianConditional().to(dtype=dtype, device=device)


def gaussian_likelihood(value: torch.Tensor, sigma: torch.Tensor,
                        model: Optional[GaussianConditional] = None) -> torch.Tensor:
    """Bin mass under N(0, sigma^2) with the default floors unless a model is given"""
    if model is None:
        model = _reference_gaussian(sigma.dtype, sigma.device)
    return model.likelihood(value, sigma)


def factorized_likelihood(z: torch.Tensor, prior: FactorizedPrior) -> torch.Tensor:
    return prior.likelihood(z)
