import numpy as np
import pytest

from ssfcodec.entropy.cdf_tables import CdfTable, estimate_bits, quantize_pmf
from ssfcodec.entropy.range_coder import RangeDecoder, RangeEncoder, range_decode, range_encode
from ssfcodec.errors import InvalidArgumentError, RangeCoderError


def random_table(rng, max_support=40):
    support = int(rng.integers(1, max_support))
    pmf = rng.dirichlet(np.full(support, 0.7))
    pmf = np.append(pmf * (1 - 1e-4), 1e-4)
    return CdfTable(int(rng.integers(-10, 3)), quantize_pmf(pmf))


def sample_message(rng, tables, length, escape_rate=0.02):
    indexes = rng.integers(0, len(tables), size=length)
    symbols = []
    for index in indexes:
        table = tables[index]
        if rng.random() < escape_rate:
            symbols.append(int(rng.integers(-(1 << 31), 1 << 31)))
        else:
            position = rng.choice(table.support_size, p=table.pmf[:-1] / table.pmf[:-1].sum())
            symbols.append(table.offset + int(position))
    return np.array(symbols, dtype=np.int64), indexes


def test_empty_message():
    table = CdfTable(0, quantize_pmf([0.5, 0.5 - 1e-6, 1e-6]))
    data = range_encode([], [], [table])
    assert data == b'\x00' * 5
    assert range_decode(data, [], [table]).size == 0


def test_known_four_symbol_distribution_round_trip():
    rng = np.random.default_rng(0)
    pmf = np.array([0.5, 0.25, 0.125, 0.125])
    table = CdfTable(-1, quantize_pmf(np.append(pmf * (1 - 1e-6), 1e-6)))
    symbols = rng.choice(4, size=1000, p=pmf) - 1
    indexes = np.zeros(1000, dtype=np.int64)
    data = range_encode(symbols, indexes, [table])
    assert np.array_equal(range_decode(data, indexes, [table]), symbols)
    # about 1.75 bits per symbol
    assert 8 * len(data) <= 1.02 * estimate_bits(symbols, indexes, [table]) + 64
    assert 8 * len(data) < 2.2 * 1000


def test_uniform_alphabet_length():
    rng = np.random.default_rng(1)
    table = CdfTable(0, np.full(256, 256))
    symbols = rng.integers(0, 255, size=4096)
    data = range_encode(symbols, np.zeros(4096, dtype=np.int64), [table])
    assert abs(len(data) - 4096) <= 0.01 * 4096
    assert np.array_equal(range_decode(data, np.zeros(4096, dtype=np.int64), [table]), symbols)


def test_randomized_round_trips():
    rng = np.random.default_rng(2)
    pool = [random_table(rng) for _ in range(200)]
    mismatches = 0
    for _ in range(10000):
        tables = [pool[i] for i in rng.integers(0, len(pool), size=3)]
        symbols, indexes = sample_message(rng, tables, int(rng.integers(0, 12)))
        decoded = range_decode(range_encode(symbols, indexes, tables), indexes, tables)
        mismatches += not np.array_equal(decoded, symbols)
    assert mismatches == 0


def test_encoded_length_tracks_table_estimate():
    rng = np.random.default_rng(3)
    tables = [random_table(rng, 200) for _ in range(8)]
    for length in (1, 50, 500, 3000):
        symbols, indexes = sample_message(rng, tables, length, escape_rate=0.01)
        estimate = estimate_bits(symbols, indexes, tables)
        bits = 8 * len(range_encode(symbols, indexes, tables))
        assert estimate - 8 <= bits <= 1.02 * estimate + 64


def test_escaped_extremes_round_trip():
    table = CdfTable(0, quantize_pmf([0.6, 0.4 - 1e-3, 1e-3]))
    symbols = np.array([0, 1, -1, 2, (1 << 31) - 1, -(1 << 31), 1000, 1], dtype=np.int64)
    indexes = np.zeros(len(symbols), dtype=np.int64)
    data = range_encode(symbols, indexes, [table])
    assert np.array_equal(range_decode(data, indexes, [table]), symbols)


def test_escape_rejects_values_beyond_32_bits():
    table = CdfTable(0, quantize_pmf([0.9, 0.1]))
    with pytest.raises(InvalidArgumentError):
        range_encode([1 << 40], [0], [table])


def test_stream_length_is_five_plus_renormalisations():
    encoder = RangeEncoder()
    table = CdfTable(0, np.full(256, 256))
    for value in range(100):
        encoder.encode_symbol(value % 256, table)
    data = encoder.finish()
    assert data[0] == 0
    # each uniform 8-bit symbol shifts out exactly one byte
    assert len(data) == 5 + 100


@pytest.fixture
def coded():
    rng = np.random.default_rng(4)
    tables = [random_table(rng) for _ in range(4)]
    symbols, indexes = sample_message(rng, tables, 300)
    return range_encode(symbols, indexes, tables), symbols, indexes, tables


def test_nonzero_lead_byte_is_rejected(coded):
    data, _, indexes, tables = coded
    with pytest.raises(RangeCoderError):
        range_decode(b'\x01' + data[1:], indexes, tables)


def test_truncated_stream_is_rejected(coded):
    data, _, indexes, tables = coded
    with pytest.raises(RangeCoderError):
        range_decode(data[:-1], indexes, tables)


def test_trailing_bytes_are_rejected(coded):
    data, _, indexes, tables = coded
    with pytest.raises(RangeCoderError):
        range_decode(data + b'\x00', indexes, tables)


def test_short_stream_is_rejected():
    with pytest.raises(RangeCoderError):
        RangeDecoder(b'\x00\x00')
