"""
Frame sequence ingestion, synthetic sequences and frame export
"""
import os
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import torch
from PIL import Image

from ssfcodec.errors import DataError, InvalidArgumentError

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {'.png', '.tif', '.tiff', '.pgm', '.bmp'}
ARRAY_EXTENSIONS = {'.npy'}
MODES = ('train', 'test')
SIXTEEN_BIT_MODES = {'I;16', 'I;16B', 'I;16L', 'I;16N', 'I'}


@dataclass
class SequenceDataset:
    """
    frames: (N, C, H, W) float32 in [0, 1], ordered as the source files.
    Train mode draws random chunk_length chunks with random crops; test mode
    splits the sequence into consecutive non-overlapping clips of gop_size.
    """
    frames: torch.Tensor
    mode: str = 'test'
    chunk_length: int = 4
    gop_size: int = 30
    files: List[str] = field(default_factory=list)
    root: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgumentError(f"Unknown dataset mode '{self.mode}', expected one of {MODES}")
        if self.frames.dim() != 4 or self.frames.shape[0] == 0:
            raise DataError(f"Expected a non-empty (N, C, H, W) frame tensor, got {tuple(self.frames.shape)}")
        if self.chunk_length < 1 or self.gop_size < 1:
            raise InvalidArgumentError("chunk_length and gop_size must be positive")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_shape(self):
        return tuple(self.frames.shape[1:])

    @property
    def height(self) -> int:
        return self.frames.shape[-2]

    @property
    def width(self) -> int:
        return self.frames.shape[-1]

    def with_mode(self, mode: str) -> 'SequenceDataset':
        return SequenceDataset(self.frames, mode, self.chunk_length, self.gop_size, self.files, self.root)

    def clips(self) -> List[torch.Tensor]:
        """Consecutive clips of gop_size frames; a shorter tail clip is kept"""
        return [self.frames[start:start + self.gop_size] for start in range(0, self.num_frames, self.gop_size)]

    def __len__(self):
        if self.mode == 'test':
            return len(self.clips())
        return max(self.num_frames - self.chunk_length + 1, 0)

    def __getitem__(self, index):
        if self.mode == 'test':
            return self.clips()[index]
        return self.frames[index:index + self.chunk_length]

    def sample_batch(self, batch_size: int, crop: int, generator: torch.Generator) -> torch.Tensor:
        """(B, T, C, crop, crop) random consecutive chunks with random crops"""
        if self.num_frames < self.chunk_length:
            raise DataError(f"Dataset has {self.num_frames} frames, fewer than the chunk length {self.chunk_length}")
        if crop > self.height or crop > self.width:
            raise DataError(f"Crop {crop} exceeds frame size {self.height}x{self.width}")
        starts = torch.randint(0, self.num_frames - self.chunk_length + 1, (batch_size,), generator=generator)
        tops = torch.randint(0, self.height - crop + 1, (batch_size,), generator=generator)
        lefts = torch.randint(0, self.width - crop + 1, (batch_size,), generator=generator)
        chunks = [
            self.frames[s:s + self.chunk_length, :, t:t + crop, l:l + crop]
            for s, t, l in zip(starts.tolist(), tops.tolist(), lefts.tolist())
        ]
        return torch.stack(chunks)


def _read_image(path: str, bit_depth: Optional[int]) -> np.ndarray:
    with Image.open(path) as image:
        mode = image.mode
        data = np.array(image)
    if mode in ('RGB', 'RGBA', 'P', 'CMYK', 'LA'):
        raise DataError(f"{path}: expected a single-channel image, got mode {mode}")
    if mode == 'F':
        return data.astype(np.float32)
    if bit_depth is None:
        bit_depth = 16 if mode in SIXTEEN_BIT_MODES else 8
    return data.astype(np.float64) / float(2 ** bit_depth - 1)


def _read_array(path: str, bit_depth: Optional[int]) -> np.ndarray:
    data = np.load(path)
    if np.issubdtype(data.dtype, np.integer):
        depth = bit_depth or np.iinfo(data.dtype).bits
        return data.astype(np.float64) / float(2 ** depth - 1)
    return data.astype(np.float64)


def _to_chw(array: np.ndarray, path: str) -> np.ndarray:
    if array.ndim == 2:
        return array[None]
    if array.ndim == 3 and array.shape[0] == 1:
        return array
    raise DataError(f"{path}: expected a single-channel 2-D frame, got shape {array.shape}")


def list_frame_files(path: str) -> List[str]:
    if not os.path.isdir(path):
        raise DataError(f"Data directory not found: {path}")
    names = sorted(
        name for name in os.listdir(path)
        if os.path.splitext(name)[1].lower() in IMAGE_EXTENSIONS | ARRAY_EXTENSIONS
    )
    if not names:
        raise DataError(f"No frame files in {path}")
    return [os.path.join(path, name) for name in names]


def load_dataset(path: str, mode: str = 'test', bit_depth: Optional[int] = None,
                 chunk_length: int = 4, gop_size: int = 30) -> SequenceDataset:
    """
    Load a directory of single-channel frames in lexicographic file order.

    8/16-bit rasters are scaled by 2**bit_depth - 1 (depth inferred from the
    image mode unless given); float .npy arrays must already lie in [0, 1].
    """
    files = list_frame_files(path)
    arrays = []
    for file_path in files:
        if os.path.splitext(file_path)[1].lower() in ARRAY_EXTENSIONS:
            array = _read_array(file_path, bit_depth)
        else:
            try:
                array = _read_image(file_path, bit_depth)
            except DataError:
                raise
            except Exception as e:
                raise DataError(f"Could not read {file_path}: {e}")
        arrays.append(_to_chw(array, file_path))

    reference = arrays[0].shape
    offending = [f"{os.path.basename(p)} {a.shape[1]}x{a.shape[2]}" for p, a in zip(files, arrays)
                 if a.shape != reference]
    if offending:
        raise DataError(
            f"Mixed resolutions in {path}: expected {reference[1]}x{reference[2]}, "
            f"offending files: {', '.join(offending)}"
        )
    frames = np.stack(arrays)
    if frames.min() < 0.0 or frames.max() > 1.0:
        raise DataError(f"Frame values in {path} fall outside [0, 1] after normalization")

    logger.info(f"Loaded {len(files)} frames of {reference[1]}x{reference[2]} from {path}")
    return SequenceDataset(torch.from_numpy(frames.astype(np.float32)), mode, chunk_length, gop_size, files, path)


def gen_synthetic(n_frames: int, size: int, seed: int = 0, num_blobs: int = 6, mode: str = 'test',
                  chunk_length: int = 4, gop_size: int = 30) -> SequenceDataset:
    """
    Drifting Gaussian blobs whose brightness slowly oscillates, over a smooth
    background. Deterministic in seed.
    """
    if n_frames < 1 or size < 1:
        raise InvalidArgumentError("n_frames and size must be positive")
    rng = np.random.default_rng(seed)
    ys, xs = np.meshgrid(np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64), indexing='ij')

    tilt = rng.uniform(-0.15, 0.15, size=2)
    phase = rng.uniform(0, 2 * np.pi)
    background = (0.25 + tilt[0] * (xs / size - 0.5) + tilt[1] * (ys / size - 0.5)
                  + 0.05 * np.sin(2 * np.pi * xs / size + phase) * np.cos(2 * np.pi * ys / size))

    centres = rng.uniform(0.15 * size, 0.85 * size, size=(num_blobs, 2))
    velocities = rng.uniform(-0.6, 0.6, size=(num_blobs, 2))
    widths = rng.uniform(0.04 * size, 0.12 * size, size=num_blobs)
    amplitudes = rng.uniform(0.2, 0.5, size=num_blobs)
    periods = rng.uniform(40, 120, size=num_blobs)
    phases = rng.uniform(0, 2 * np.pi, size=num_blobs)

    frames = np.empty((n_frames, 1, size, size), dtype=np.float32)
    for t in range(n_frames):
        frame = background.copy()
        for b in range(num_blobs):
            cy, cx = centres[b] + velocities[b] * t
            brightness = amplitudes[b] * (1.0 + 0.3 * np.sin(2 * np.pi * t / periods[b] + phases[b]))
            frame += brightness * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * widths[b] ** 2))
        frames[t, 0] = np.clip(frame, 0.0, 1.0)

    logger.debug(f"Generated {n_frames} synthetic {size}x{size} frames (seed {seed})")
    return SequenceDataset(torch.from_numpy(frames), mode, chunk_length, gop_size)


def save_frames(frames: torch.Tensor, out_dir: str, bit_depth: int = 16, prefix: str = 'frame') -> List[str]:
    """Write (T, C, H, W) frames as single-channel PNGs named <prefix>_00000.png, ..."""
    if bit_depth not in (8, 16):
        raise InvalidArgumentError(f"bit_depth must be 8 or 16, got {bit_depth}")
    os.makedirs(out_dir, exist_ok=True)
    peak = 2 ** bit_depth - 1
    dtype = np.uint16 if bit_depth == 16 else np.uint8
    paths = []
    for index, frame in enumerate(frames):
        array = frame.detach().cpu().numpy()
        if array.ndim == 3:
            if array.shape[0] != 1:
                raise InvalidArgumentError("Only single-channel frames can be written as images")
            array = array[0]
        pixels = np.round(np.clip(array, 0.0, 1.0) * peak).astype(dtype)
        path = os.path.join(out_dir, f"{prefix}_{index:05d}.png")
        Image.fromarray(pixels).save(path)
        paths.append(path)
    logger.info(f"Wrote {len(paths)} frames to {out_dir}")
    return paths
