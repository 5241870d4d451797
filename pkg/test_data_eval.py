import json
import math
import os

import numpy as np
import pandas as pd
import pytest
import torch
from PIL import Image

from ssfcodec.codec.bitstream import Bitstream, StreamHeader
from ssfcodec.data import SequenceDataset, gen_synthetic, load_dataset, save_frames
from ssfcodec.errors import DataError, InvalidArgumentError
from ssfcodec.evaluation import RdPoint, emit_rd_curve, eval_model, load_points, rd_figure, write_report
from ssfcodec.metrics import bpp, capped_psnr, mse, psnr


def test_test_mode_splits_into_consecutive_clips():
    dataset = SequenceDataset(torch.zeros(120, 1, 4, 4), gop_size=30)
    assert len(dataset) == 4
    assert all(clip.shape[0] == 30 for clip in dataset.clips())

    tail = SequenceDataset(torch.arange(100.0).view(100, 1, 1, 1), gop_size=30)
    assert [clip.shape[0] for clip in tail.clips()] == [30, 30, 30, 10]
    assert float(tail[3][0]) == 90.0


def test_train_mode_samples_chunks_and_crops():
    dataset = SequenceDataset(torch.rand(10, 1, 32, 32), mode='train', chunk_length=3)
    assert len(dataset) == 8
    batch = dataset.sample_batch(4, 16, torch.Generator().manual_seed(0))
    assert batch.shape == (4, 3, 1, 16, 16)
    with pytest.raises(DataError):
        dataset.sample_batch(1, 64, torch.Generator())


def test_sixteen_bit_frames_are_scaled_to_unit_range(tmp_path):
    Image.fromarray(np.full((8, 8), 65535, dtype=np.uint16)).save(tmp_path / 'a.png')
    Image.fromarray(np.zeros((8, 8), dtype=np.uint16)).save(tmp_path / 'b.png')
    dataset = load_dataset(str(tmp_path))
    assert dataset.frames.shape == (2, 1, 8, 8)
    assert float(dataset.frames[0].min()) == 1.0
    assert float(dataset.frames[1].max()) == 0.0


def test_eight_bit_frames_use_their_own_depth(tmp_path):
    Image.fromarray(np.full((4, 4), 255, dtype=np.uint8)).save(tmp_path / 'a.png')
    assert float(load_dataset(str(tmp_path)).frames.max()) == 1.0


def test_frames_load_in_lexicographic_order(tmp_path):
    for name, value in (('frame_2.npy', 0.2), ('frame_10.npy', 0.1), ('frame_1.npy', 0.0)):
        np.save(tmp_path / name, np.full((4, 4), value, dtype=np.float32))
    dataset = load_dataset(str(tmp_path))
    assert [os.path.basename(f) for f in dataset.files] == ['frame_1.npy', 'frame_10.npy', 'frame_2.npy']
    assert dataset.frames[:, 0, 0, 0].tolist() == pytest.approx([0.0, 0.1, 0.2])


def test_mixed_resolutions_name_the_offending_file(tmp_path):
    np.save(tmp_path / 'a.npy', np.zeros((8, 8), dtype=np.float32))
    np.save(tmp_path / 'b.npy', np.zeros((8, 4), dtype=np.float32))
    with pytest.raises(DataError) as excinfo:
        load_dataset(str(tmp_path))
    assert 'b.npy' in str(excinfo.value)


def test_missing_or_empty_directory_is_rejected(tmp_path):
    with pytest.raises(DataError):
        load_dataset(str(tmp_path))
    with pytest.raises(DataError):
        load_dataset(str(tmp_path / 'absent'))


def test_colour_frames_are_rejected(tmp_path):
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(tmp_path / 'rgb.png')
    with pytest.raises(DataError):
        load_dataset(str(tmp_path))


def test_out_of_range_arrays_are_rejected(tmp_path):
    np.save(tmp_path / 'a.npy', np.full((4, 4), 1.5, dtype=np.float32))
    with pytest.raises(DataError):
        load_dataset(str(tmp_path))


def test_synthetic_sequences_are_deterministic_and_smooth():
    first = gen_synthetic(8, 32, seed=11).frames
    again = gen_synthetic(8, 32, seed=11).frames
    other = gen_synthetic(8, 32, seed=12).frames
    assert torch.equal(first, again)
    assert not torch.equal(first, other)
    assert first.min() >= 0 and first.max() <= 1
    consecutive = mse(first[1:], first[:-1])
    assert consecutive < mse(first, other)


def test_saved_frames_load_back_within_quantization(tmp_path):
    frames = gen_synthetic(3, 16, seed=2).frames
    paths = save_frames(frames, str(tmp_path))
    assert [os.path.basename(p) for p in paths] == ['frame_00000.png', 'frame_00001.png', 'frame_00002.png']
    restored = load_dataset(str(tmp_path)).frames
    assert float((restored - frames).abs().max()) <= 0.5 / 65535 + 1e-6


def test_save_frames_rejects_bad_depth(tmp_path):
    with pytest.raises(InvalidArgumentError):
        save_frames(torch.zeros(1, 1, 4, 4), str(tmp_path), bit_depth=12)


def test_psnr_examples():
    x = torch.zeros(1, 8, 8)
    assert psnr(x, x + 0.1) == pytest.approx(20.0)
    assert psnr(x, x) == math.inf
    assert capped_psnr(psnr(x, x)) == 100.0
    with pytest.raises(InvalidArgumentError):
        mse(x, torch.zeros(1, 4, 4))


def test_bpp_examples():
    stream = Bitstream(StreamHeader(64, 64, 1, 30, bytes(16), 1), [b'\x00' * 508])
    assert bpp(stream, 1, 64, 64, include_header=False) == 1.0
    assert bpp(stream, 2, 64, 64, include_header=False) == 0.5
    assert bpp(stream.to_bytes(), 1, 64, 64) == 8.0 * stream.total_bytes / 4096
    assert bpp(512, 1, 64, 64) == 1.0


def test_eval_reports_one_row_per_frame(tiny_codec):
    dataset = gen_synthetic(5, 64, seed=1, gop_size=3)
    result = eval_model(tiny_codec, dataset, lmbda=0.01, estimate=True)
    assert len(result.frames) == 5
    assert result.frames['type'].tolist() == ['I', 'P', 'P', 'I', 'P']
    point = result.point
    assert point.frames == 5 and point.family == 'flawin'
    assert point.bpp == pytest.approx(point.bits / (5 * 64 * 64))
    assert point.estimated_bpp is not None and point.estimated_bpp > 0
    assert point.psnr_db == pytest.approx(result.frames['psnr_db'].mean())


def test_eval_payload_only_excludes_headers(tiny_codec):
    dataset = gen_synthetic(2, 64, seed=1, gop_size=30)
    full = eval_model(tiny_codec, dataset).point
    payload = eval_model(tiny_codec, dataset, include_header=False).point
    assert full.bits - payload.bits == 8 * 31


def test_report_round_trip(tmp_path, tiny_codec):
    result = eval_model(tiny_codec, gen_synthetic(2, 64, seed=1), lmbda=0.02)
    path = write_report(result, str(tmp_path / 'reports' / 'a.json'))
    with open(path) as f:
        assert len(json.load(f)['frames']) == 2
    points = load_points(str(tmp_path / 'reports' / '*.json'))
    assert points == [result.point]


def sample_points():
    return [
        RdPoint(0.04, 0.30, 36.0, 'b', 'swin'),
        RdPoint(0.01, 0.10, 31.0, 'a', 'flawin'),
        RdPoint(0.01, 0.12, 30.5, 'c', 'swin'),
        RdPoint(0.04, 0.25, 35.5, 'd', 'flawin'),
    ]


def test_rd_curve_files(tmp_path):
    prefix = str(tmp_path / 'curve')
    written = emit_rd_curve(sample_points(), prefix)
    assert f"{prefix}.csv" in written and f"{prefix}.html" in written
    table = pd.read_csv(f"{prefix}.csv")
    assert len(table) == 4
    assert load_points(f"{prefix}.json") == sample_points()


def test_rd_curve_without_plot(tmp_path):
    prefix = str(tmp_path / 'curve')
    assert emit_rd_curve(sample_points(), prefix, plot=False) == [f"{prefix}.csv", f"{prefix}.json"]
    assert not os.path.exists(f"{prefix}.html")


def test_rd_figure_series_follow_first_appearance():
    fig = rd_figure(sample_points())
    assert [trace.name for trace in fig.data] == ['SSF-swin', 'SSF-flawin']
    assert list(fig.data[1].x) == [0.10, 0.25]


def test_load_points_requires_matches(tmp_path):
    with pytest.raises(DataError):
        load_points(str(tmp_path / '*.json'))
