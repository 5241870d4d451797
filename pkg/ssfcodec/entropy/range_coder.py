"""
Carry-propagating range coder over 16-bit frequency tables.

The encoder keeps a 33-bit `low`, a 32-bit `range` and a pending cache byte;
every stream starts with a zero byte and is exactly 5 + (number of
renormalisation shifts) bytes long, which the decoder checks.
"""
import bisect
import logging
from typing import List, Sequence

import numpy as np

from ssfcodec.entropy.cdf_tables import CdfTable, PRECISION
from ssfcodec.errors import InvalidArgumentError, RangeCoderError

logger = logging.getLogger(__name__)

TOP = 1 << 24
MASK32 = 0xFFFFFFFF
RAW_HALF_BITS = 16


class RangeEncoder:
    def __init__(self, precision: int = PRECISION):
        self.precision = precision
        self.low = 0
        self.range = MASK32
        self.cache = 0
        self.cache_size = 1
        self.output = bytearray()
        self.finished = False

    def _shift_low(self):
        if self.low < 0xFF000000 or self.low > MASK32:
            carry = self.low >> 32
            temp = self.cache
            while True:
                self.output.append((temp + carry) & 0xFF)
                temp = 0xFF
                self.cache_size -= 1
                if self.cache_size == 0:
                    break
            self.cache = (self.low >> 24) & 0xFF
        self.cache_size += 1
        self.low = (self.low & 0x00FFFFFF) << 8

    def encode_freq(self, start: int, freq: int):
        if self.finished:
            raise InvalidArgumentError("Encoder already finished")
        r = self.range >> self.precision
        self.low += r * start
        self.range = r * freq
        while self.range < TOP:
            self.range <<= 8
            self._shift_low()

    def encode_symbol(self, index: int, table: CdfTable):
        self.encode_freq(table.cdf[index], int(table.freqs[index]))

    def encode_raw(self, value: int):
        """32-bit two's complement value as two uniform 16-bit symbols"""
        if not -(1 << 31) <= value < (1 << 31):
            raise InvalidArgumentError(f"Escaped value {value} does not fit in 32 bits")
        word = value & MASK32
        self.encode_freq(word >> RAW_HALF_BITS, 1)
        self.encode_freq(word & 0xFFFF, 1)

    def finish(self) -> bytes:
        if not self.finished:
            for _ in range(5):
                self._shift_low()
            self.finished = True
        return bytes(self.output)


class RangeDecoder:
    def __init__(self, data: bytes, precision: int = PRECISION):
        self.data = bytes(data)
        self.precision = precision
        self.position = 0
        if len(self.data) < 5:
            raise RangeCoderError(f"Stream of {len(self.data)} bytes is shorter than the 5-byte minimum")
        if self.data[0] != 0:
            raise RangeCoderError(f"Stream lead byte is {self.data[0]}, expected 0")
        self.position = 1
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._next_byte()
        self.range = MASK32

    def _next_byte(self) -> int:
        if self.position >= len(self.data):
            raise RangeCoderError("Stream ended before all symbols were decoded")
        byte = self.data[self.position]
        self.position += 1
        return byte

    def _target(self) -> int:
        self._r = self.range >> self.precision
        value = self.code // self._r
        if value >= 1 << self.precision:
            raise RangeCoderError(f"Cumulative value {value} outside the {self.precision}-bit table range")
        return value

    def _consume(self, start: int, freq: int):
        self.code -= self._r * start
        self.range = self._r * freq
        while self.range < TOP:
            self.range <<= 8
            self.code = ((self.code << 8) | self._next_byte()) & MASK32

    def decode_symbol(self, table: CdfTable) -> int:
        value = self._target()
        index = bisect.bisect_right(table.cdf, value) - 1
        self._consume(table.cdf[index], int(table.freqs[index]))
        return index

    def decode_raw(self) -> int:
        words = []
        for _ in range(2):
            value = self._target()
            self._consume(value, 1)
            words.append(value)
        word = (words[0] << RAW_HALF_BITS) | words[1]
        return word - (1 << 32) if word >= 1 << 31 else word

    def check_exhausted(self):
        if self.position != len(self.data):
            raise RangeCoderError(f"{len(self.data) - self.position} trailing bytes after the last symbol")


def _as_ints(values) -> List[int]:
    if hasattr(values, 'detach'):
        values = values.detach().cpu().numpy()
    return np.asarray(values).astype(np.int64).ravel().tolist()


def range_encode(symbols, indexes, tables: Sequence[CdfTable]) -> bytes:
    """Code each symbol with tables[indexes[i]]; values outside the support are escaped"""
    symbols, indexes = _as_ints(symbols), _as_ints(indexes)
    if len(symbols) != len(indexes):
        raise InvalidArgumentError(f"{len(symbols)} symbols but {len(indexes)} table indexes")
    encoder = RangeEncoder(tables[0].precision if tables else PRECISION)
    escapes = 0
    for value, table_index in zip(symbols, indexes):
        table = tables[table_index]
        position = table.symbol_index(value)
        encoder.encode_symbol(position, table)
        if position == table.escape_index:
            encoder.encode_raw(value)
            escapes += 1
    data = encoder.finish()
    if escapes:
        logger.debug(f"Range coder escaped {escapes} of {len(symbols)} symbols")
    return data


def range_decode(data: bytes, indexes, tables: Sequence[CdfTable]) -> np.ndarray:
    """Inverse of range_encode; the symbol count is len(indexes)"""
    indexes = _as_ints(indexes)
    decoder = RangeDecoder(data, tables[0].precision if tables else PRECISION)
    values = np.empty(len(indexes), dtype=np.int64)
    for i, table_index in enumerate(indexes):
        table = tables[table_index]
        position = decoder.decode_symbol(table)
        if position == table.escape_index:
            values[i] = decoder.decode_raw()
        else:
            values[i] = table.offset + position
    decoder.check_exhausted()
    return values
