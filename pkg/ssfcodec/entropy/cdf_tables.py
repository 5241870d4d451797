"""
Integer cdf tables for the range coder, read from the entropy models' quantized cdfs
"""
import math
import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
import torch
from compressai.entropy_models.entropy_models import pmf_to_quantized_cdf

from ssfcodec.errors import ConfigurationError

logger = logging.getLogger(__name__)

PRECISION = 16
TOTAL = 1 << PRECISION
RAW_BITS = 32


@dataclass
class CdfTable:
    """
    Symbols offset .. offset + support_size - 1 followed by one escape entry.
    freqs sum to 2**precision; cdf has len(freqs) + 1 entries starting at 0.
    """
    offset: int
    freqs: np.ndarray
    precision: int = PRECISION
    cdf: List[int] = field(init=False, repr=False)

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=np.int64)
        if self.freqs.min() < 1 or int(self.freqs.sum()) != 1 << self.precision:
            raise ConfigurationError("cdf table frequencies must be positive and sum to 2**precision")
        self.cdf = [0] + np.cumsum(self.freqs).tolist()

    @property
    def support_size(self) -> int:
        return len(self.freqs) - 1

    @property
    def escape_index(self) -> int:
        return len(self.freqs) - 1

    @property
    def pmf(self) -> np.ndarray:
        return self.freqs / float(1 << self.precision)

    def symbol_index(self, value: int) -> int:
        """Position of value in the table, or the escape index when out of support"""
        index = value - self.offset
        if 0 <= index < self.support_size:
            return index
        return self.escape_index

    def bits(self, value: int) -> float:
        index = self.symbol_index(value)
        cost = self.precision - math.log2(self.freqs[index])
        if index == self.escape_index:
            cost += RAW_BITS
        return cost


def quantize_pmf(pmf: Sequence[float], precision: int = PRECISION) -> np.ndarray:
    """Positive integer frequencies summing to 2**precision; the last entry is the escape"""
    pmf = np.clip(np.asarray(pmf, dtype=np.float64), 0.0, None)
    if len(pmf) >= 1 << precision:
        raise ConfigurationError(f"Support of {len(pmf)} symbols exceeds {precision}-bit precision")
    cdf = pmf_to_quantized_cdf(torch.tensor(pmf, dtype=torch.float32), precision)
    return np.diff(np.asarray(cdf.tolist(), dtype=np.int64))


def build_cdf_tables(model) -> List[CdfTable]:
    """One table per row of the model's quantized cdf, refreshed from the current parameters"""
    if not hasattr(model, 'update_tables'):
        raise ConfigurationError(f"No cdf tables for model type {type(model).__name__}")
    model.update_tables()
    precision = model.entropy_coder_precision
    cdfs = model.quantized_cdf.tolist()
    lengths = model.cdf_length.tolist()
    offsets = model.offset.tolist()
    return [
        CdfTable(int(offset), np.diff(np.asarray(cdf[:length], dtype=np.int64)), precision)
        for cdf, length, offset in zip(cdfs, lengths, offsets)
    ]


def estimate_bits(symbols: Sequence[int], indexes: Sequence[int], tables: Sequence[CdfTable]) -> float:
    """Ideal code length of the message under the quantized tables, escapes included"""
    return float(sum(tables[i].bits(int(s)) for s, i in zip(symbols, indexes)))
