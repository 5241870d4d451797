import struct

import pytest
import torch

from conftest import tiny_config
from ssfcodec.checkpoint import load_checkpoint, model_digest, save_checkpoint
from ssfcodec.codec import (
    Bitstream, CodecConfig, GopPlan, HEADER_SIZE, StreamHeader, build_codec, chunk_layout, code_iframe,
    code_pframe, compress_gop, decompress_gop, encode_sequence, iter_decode, motion_estimate_code
)
from ssfcodec.codec.bitstream import iter_chunks, max_frame_count, pack_chunk, unpack_chunk
from ssfcodec.errors import BitstreamError, DataError, DecodeError, InvalidArgumentError


def test_gop_plan_pattern():
    assert GopPlan(3).pattern(7) == 'IPPIPPI'
    assert GopPlan(1).pattern(3) == 'III'
    with pytest.raises(InvalidArgumentError):
        GopPlan(0)
    with pytest.raises(InvalidArgumentError):
        GopPlan(256)


def test_chunk_layout_orders_motion_before_residual():
    assert list(chunk_layout(4, 2)) == [(0, 'I'), (1, 'M'), (1, 'R'), (2, 'I'), (3, 'M'), (3, 'R')]


def test_header_round_trip_and_validation():
    header = StreamHeader(64, 128, 1, 30, bytes(range(16)), 7)
    packed = header.pack()
    assert len(packed) == HEADER_SIZE
    assert StreamHeader.unpack(packed) == header
    with pytest.raises(BitstreamError):
        StreamHeader.unpack(b'XXXX' + packed[4:])
    with pytest.raises(BitstreamError):
        StreamHeader.unpack(packed[:10])
    with pytest.raises(BitstreamError):
        StreamHeader(0, 64, 1, 30, bytes(16), 1).pack()


def test_chunk_checksum_detects_corruption():
    chunk = pack_chunk(b'\x00abc', b'\x00defgh')
    assert unpack_chunk(chunk) == (b'\x00abc', b'\x00defgh')
    damaged = chunk[:-1] + bytes([chunk[-1] ^ 0x01])
    with pytest.raises(DecodeError) as excinfo:
        unpack_chunk(damaged, frame_index=4)
    assert excinfo.value.frame_index == 4


def test_iframe_reconstruction_stays_in_pixel_range(tiny_codec, synthetic):
    coding = code_iframe(synthetic.frames[0], tiny_codec.iframe)
    assert coding.x_hat.shape == (1, 1, 64, 64)
    assert coding.x_hat.min() >= 0 and coding.x_hat.max() <= 1
    assert float(coding.rate) > 0
    assert torch.equal(coding.latents.y_hat, torch.round(coding.latents.y_hat))


def test_codec_config_round_trips_through_its_dict():
    cfg = tiny_config('swin')
    restored = CodecConfig.from_dict(cfg.to_dict())
    assert restored == cfg
    assert restored.latent_shape(64, 64) == (1, 8, 4, 4)


def test_latent_code_shapes_match_the_model_geometry(tiny_codec, synthetic):
    latents = code_iframe(synthetic.frames[0], tiny_codec.iframe).latents
    assert latents.y_shape == tiny_codec.config.latent_shape(64, 64)
    assert latents.z_shape == tiny_codec.config.hyper_shape(64, 64)


def test_training_mode_rate_is_differentiable(tiny_codec, synthetic):
    coding = code_iframe(synthetic.frames[:2], tiny_codec.iframe, mode='train',
                         generator=torch.Generator().manual_seed(0))
    coding.rate.backward()
    assert next(tiny_codec.iframe.g_a.parameters()).grad is not None


def test_pframe_rate_is_motion_plus_residual(tiny_codec, synthetic):
    coding = code_pframe(synthetic.frames[1], synthetic.frames[0], tiny_codec.pframe)
    assert torch.equal(coding.rate, coding.rate_motion + coding.rate_residual)
    assert coding.x_hat.shape == (1, 1, 64, 64)
    assert coding.x_hat.min() >= 0 and coding.x_hat.max() <= 1
    assert coding.flow.fz.min() >= 0
    assert coding.flow.fz.max() <= tiny_codec.pframe.scale_space.num_scales


def test_motion_rejects_mismatched_reference(tiny_codec, synthetic):
    with pytest.raises(InvalidArgumentError):
        motion_estimate_code(synthetic.frames[1], synthetic.frames[0][:, :32], tiny_codec.pframe)


def test_single_frame_stream(tiny_codec, synthetic):
    stream = compress_gop(synthetic.frames[:1], tiny_codec)
    assert stream.layout() == [(0, 'I')]
    decoded = decompress_gop(stream.to_bytes(), tiny_codec)
    assert decoded.shape == (1, 1, 64, 64)


def test_decoder_reproduces_encoder_reconstructions(family_codec, synthetic):
    encoded = encode_sequence(synthetic.frames[:3], family_codec, GopPlan(2))
    decoded = decompress_gop(encoded.bitstream.to_bytes(), family_codec)
    assert torch.equal(decoded, encoded.reconstructions)
    assert decoded.min() >= 0 and decoded.max() <= 1


def test_thirty_frame_gop_parses_into_one_intra_and_motion_residual_pairs(tiny_codec):
    from ssfcodec.data import gen_synthetic

    frames = gen_synthetic(30, 64, seed=8).frames
    data = compress_gop(frames, tiny_codec, GopPlan(30)).to_bytes()
    stream = Bitstream.from_bytes(data)
    kinds = [kind for _, kind in stream.layout()]
    assert kinds.count('I') == 1
    assert kinds.count('M') == kinds.count('R') == 29
    assert len(stream.chunks) == 59


def test_stream_size_is_header_plus_prefixed_chunks(tiny_codec, synthetic):
    stream = compress_gop(synthetic.frames[:4], tiny_codec, GopPlan(3))
    data = stream.to_bytes()
    assert len(data) == HEADER_SIZE + sum(4 + len(chunk) for chunk in stream.chunks)
    assert len(data) == stream.total_bytes


def test_corrupt_pframe_chunk_fails_at_that_frame(tiny_codec, synthetic):
    encoded = encode_sequence(synthetic.frames[:5], tiny_codec, GopPlan(30))
    stream = encoded.bitstream
    bad_frame = 3
    motion_chunk = 1 + 2 * (bad_frame - 1)
    chunks = list(stream.chunks)
    damaged = bytearray(chunks[motion_chunk])
    damaged[6] ^= 0xFF
    chunks[motion_chunk] = bytes(damaged)

    decoded = []
    with pytest.raises(DecodeError) as excinfo:
        for frame in iter_decode(Bitstream(stream.header, chunks).to_bytes(), tiny_codec):
            decoded.append(frame)
    assert excinfo.value.frame_index == bad_frame
    assert len(decoded) == bad_frame
    for index, frame in enumerate(decoded):
        assert torch.equal(frame, encoded.reconstructions[index])


def test_truncated_stream_names_the_frame(tiny_codec, synthetic):
    data = compress_gop(synthetic.frames[:3], tiny_codec, GopPlan(30)).to_bytes()
    with pytest.raises(BitstreamError) as excinfo:
        decompress_gop(data[:-3], tiny_codec)
    assert excinfo.value.frame_index == 2


def test_oversized_frame_count_is_rejected_before_layout(tiny_codec, synthetic):
    data = bytearray(compress_gop(synthetic.frames[:2], tiny_codec).to_bytes())
    struct.pack_into('<I', data, HEADER_SIZE - 4, 3_000_000)
    header = StreamHeader.unpack(bytes(data))
    assert header.frame_count == 3_000_000
    with pytest.raises(BitstreamError) as excinfo:
        next(iter_chunks(bytes(data), header))
    assert excinfo.value.frame_index is None
    with pytest.raises(BitstreamError):
        decompress_gop(bytes(data), tiny_codec)


def test_frame_count_bound_follows_stream_length():
    assert max_frame_count(HEADER_SIZE) == 0
    assert max_frame_count(HEADER_SIZE + 9) == 2
    assert max_frame_count(3) == 0


def test_trailing_bytes_after_last_chunk_are_rejected(tiny_codec, synthetic):
    data = compress_gop(synthetic.frames[:1], tiny_codec).to_bytes()
    with pytest.raises(BitstreamError):
        decompress_gop(data + b'\x00', tiny_codec)


def test_stream_from_another_model_is_rejected(tiny_codec, synthetic):
    data = compress_gop(synthetic.frames[:2], tiny_codec).to_bytes()
    other = build_codec(tiny_config('flawin'), seed=1)
    with pytest.raises(BitstreamError):
        decompress_gop(data, other)


def test_compress_rejects_untileable_frames(tiny_codec):
    with pytest.raises(InvalidArgumentError):
        compress_gop(torch.rand(2, 1, 48, 48), tiny_codec)
    with pytest.raises(InvalidArgumentError):
        compress_gop([], tiny_codec)


def test_checkpoint_round_trip_keeps_digest(tmp_path, tiny_codec, synthetic):
    path = str(tmp_path / 'model.pt')
    save_checkpoint(tiny_codec, path, {'lmbda': 0.01})
    restored, metadata = load_checkpoint(path)
    assert metadata['lmbda'] == 0.01
    assert model_digest(restored) == model_digest(tiny_codec)
    data = compress_gop(synthetic.frames[:2], tiny_codec).to_bytes()
    assert torch.equal(decompress_gop(data, restored), decompress_gop(data, tiny_codec))


def test_missing_checkpoint_is_a_data_error(tmp_path):
    with pytest.raises(DataError):
        load_checkpoint(str(tmp_path / 'absent.pt'))


def test_test_mode_coding_is_deterministic(tiny_codec, synthetic):
    first = code_iframe(synthetic.frames[2], tiny_codec.iframe)
    second = code_iframe(synthetic.frames[2], tiny_codec.iframe)
    assert torch.equal(first.x_hat, second.x_hat)
    assert torch.equal(first.rate, second.rate)


def test_decoded_flow_has_three_channels(tiny_codec, synthetic):
    motion = motion_estimate_code(synthetic.frames[1], synthetic.frames[0], tiny_codec.pframe)
    assert motion.flow.stack().shape == (1, 3, 64, 64)
    assert float(motion.rate) >= 0


def test_checkpoint_excludes_rebuilt_entropy_tables(tmp_path, tiny_codec, synthetic):
    before = model_digest(tiny_codec)
    compress_gop(synthetic.frames[:1], tiny_codec)
    assert tiny_codec.iframe.prior.quantized_cdf.numel() > 0
    assert model_digest(tiny_codec) == before
    path = str(tmp_path / 'tables.pt')
    save_checkpoint(tiny_codec, path)
    stored = torch.load(path, weights_only=False)['state_dict']
    assert not any(name.endswith(('_quantized_cdf', '_offset', '_cdf_length', 'quantiles')) for name in stored)
    restored, _ = load_checkpoint(path)
    assert model_digest(restored) == before


def test_coding_tables_are_the_entropy_models_quantized_cdfs(tiny_codec):
    from compressai.entropy_models import EntropyBottleneck, GaussianConditional
    from ssfcodec.codec.pipeline import build_coding_tables

    tables = build_coding_tables(tiny_codec)['iframe']
    model = tiny_codec.iframe
    assert isinstance(model.prior, EntropyBottleneck)
    assert isinstance(model.gaussian, GaussianConditional)
    for coded, entropy_model in ((tables.prior, model.prior), (tables.gaussian, model.gaussian)):
        assert len(coded) == entropy_model.quantized_cdf.shape[0]
        for row, table in enumerate(coded):
            length = int(entropy_model.cdf_length[row])
            assert table.cdf == entropy_model.quantized_cdf[row, :length].tolist()
            assert table.offset == int(entropy_model.offset[row])
