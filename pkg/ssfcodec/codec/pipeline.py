"""
I/P-frame coding and closed-loop GOP compression.

The same helpers run on both sides of the channel: the encoder rebuilds its
latents from the coded integers and reconstructs through exactly the
operations the decoder performs, so reconstructions agree bit for bit.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import torch

from ssfcodec.codec.bitstream import (
    Bitstream, StreamHeader, INTRA, MOTION, iter_chunks, pack_chunk, unpack_chunk
)
from ssfcodec.codec.models import HyperpriorAutoencoder, IFrameModel, PFrameModel, VideoCodec
from ssfcodec.entropy.cdf_tables import CdfTable, build_cdf_tables
from ssfcodec.entropy.quantization import quantize, quantize_test
from ssfcodec.entropy.range_coder import range_decode, range_encode
from ssfcodec.errors import BitstreamError, InvalidArgumentError, RangeCoderError
from ssfcodec.scale_space import FlowField, build_volume, warp

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GopPlan:
    """I followed by gop_size - 1 P frames, repeated"""
    gop_size: int = 30

    def __post_init__(self):
        if not 1 <= self.gop_size <= 255:
            raise InvalidArgumentError(f"gop_size must lie in 1..255, got {self.gop_size}")

    def is_intra(self, index: int) -> bool:
        return index % self.gop_size == 0

    def pattern(self, frame_count: int) -> str:
        return ''.join('I' if self.is_intra(i) else 'P' for i in range(frame_count))


@dataclass
class LatentCode:
    """Quantized latent and hyper-latent; entries are exact integers"""
    y_hat: torch.Tensor
    z_hat: torch.Tensor

    @property
    def y_shape(self):
        return tuple(self.y_hat.shape)

    @property
    def z_shape(self):
        return tuple(self.z_hat.shape)


class FrameCoding(NamedTuple):
    x_hat: torch.Tensor
    rate: torch.Tensor
    latents: LatentCode


class MotionCoding(NamedTuple):
    flow: FlowField
    rate: torch.Tensor
    latents: LatentCode


class PFrameCoding(NamedTuple):
    x_hat: torch.Tensor
    rate_motion: torch.Tensor
    rate_residual: torch.Tensor
    motion: LatentCode
    residual: LatentCode
    flow: FlowField
    prediction: torch.Tensor

    @property
    def rate(self) -> torch.Tensor:
        return self.rate_motion + self.rate_residual


def _as_batch(x: torch.Tensor) -> torch.Tensor:
    return x.unsqueeze(0) if x.dim() == 3 else x


def code_latents(model: HyperpriorAutoencoder, x: torch.Tensor, mode: str = 'test',
                 generator: Optional[torch.Generator] = None):
    """g_a -> h_a -> quantize -> h_s -> g_s; returns (synthesis output, rate in bits, latents)"""
    model.validate_input(x)
    y = model.g_a(x)
    z = model.h_a(y)
    z_hat = quantize(z, mode, generator)
    y_hat = quantize(y, mode, generator)
    sigma = model.scales(z_hat)
    rate = model.rate(y_hat, sigma, z_hat)
    return model.g_s(y_hat), rate, LatentCode(y_hat, z_hat)


def code_iframe(x: torch.Tensor, model: IFrameModel, mode: str = 'test',
                generator: Optional[torch.Generator] = None) -> FrameCoding:
    x = _as_batch(x)
    decoded, rate, latents = code_latents(model, x, mode, generator)
    return FrameCoding(decoded.clamp(0.0, 1.0), rate, latents)


def motion_estimate_code(x_t: torch.Tensor, x_prev: torch.Tensor, model: PFrameModel, mode: str = 'test',
                         generator: Optional[torch.Generator] = None) -> MotionCoding:
    """Code the motion between the current frame and the previous reconstruction as a scale-space flow"""
    x_t, x_prev = _as_batch(x_t), _as_batch(x_prev)
    if x_t.shape != x_prev.shape:
        raise InvalidArgumentError(
            f"Current frame {tuple(x_t.shape)} and reference {tuple(x_prev.shape)} differ in shape"
        )
    raw, rate, latents = code_latents(model.motion, torch.cat([x_t, x_prev], dim=1), mode, generator)
    flow = FlowField.from_decoder_output(raw, model.scale_space.num_scales)
    return MotionCoding(flow, rate, latents)


def motion_compensate(x_prev: torch.Tensor, flow: FlowField, model: PFrameModel) -> torch.Tensor:
    return warp(build_volume(x_prev, model.scale_space), flow)


def code_pframe(x_t: torch.Tensor, x_prev: torch.Tensor, model: PFrameModel, mode: str = 'test',
                generator: Optional[torch.Generator] = None, detach_reference: bool = False) -> PFrameCoding:
    x_t, x_prev = _as_batch(x_t), _as_batch(x_prev)
    if detach_reference:
        x_prev = x_prev.detach()
    motion = motion_estimate_code(x_t, x_prev, model, mode, generator)
    prediction = motion_compensate(x_prev, motion.flow, model)
    decoded_residual, rate_residual, residual = code_latents(
        model.residual, x_t - prediction, mode, generator
    )
    x_hat = (prediction + decoded_residual).clamp(0.0, 1.0)
    return PFrameCoding(x_hat, motion.rate, rate_residual, motion.latents, residual, motion.flow, prediction)


# Entropy-coded path

@dataclass
class CodingTables:
    prior: List[CdfTable]
    gaussian: List[CdfTable]

    @classmethod
    def for_model(cls, model: HyperpriorAutoencoder) -> 'CodingTables':
        return cls(build_cdf_tables(model.prior), build_cdf_tables(model.gaussian))


def build_coding_tables(codec: VideoCodec) -> Dict[str, CodingTables]:
    return {name: CodingTables.for_model(model) for name, model in codec.autoencoders()}


def _to_symbols(values: torch.Tensor) -> np.ndarray:
    return values.detach().to(torch.int64).cpu().numpy().ravel()


def _from_symbols(symbols: np.ndarray, shape, like: torch.Tensor) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(symbols, dtype=np.int64).reshape(shape)).to(
        dtype=like.dtype, device=like.device
    )


def _channel_indexes(shape) -> np.ndarray:
    batch, channels, height, width = shape
    return np.tile(np.repeat(np.arange(channels), height * width), batch)


def encode_latents(model: HyperpriorAutoencoder, x: torch.Tensor, tables: CodingTables):
    """Quantize, entropy-code and locally decode one quantity; returns (output, chunk, estimated bits)"""
    model.validate_input(x)
    y = model.g_a(x)
    z = model.h_a(y)
    z_symbols = _to_symbols(quantize_test(z))
    y_symbols = _to_symbols(quantize_test(y))
    z_hat = _from_symbols(z_symbols, z.shape, z)
    y_hat = _from_symbols(y_symbols, y.shape, y)

    sigma = model.scales(z_hat)
    z_bytes = range_encode(z_symbols, _channel_indexes(z.shape), tables.prior)
    indexes = model.gaussian.build_indexes(sigma)
    y_bytes = range_encode(y_symbols, indexes, tables.gaussian)
    estimate = float(model.rate(y_hat, sigma, z_hat))
    return model.g_s(y_hat), pack_chunk(z_bytes, y_bytes), estimate


def decode_latents(model: HyperpriorAutoencoder, payload: bytes, y_shape, z_shape, tables: CodingTables,
                   frame_index: Optional[int] = None, like: Optional[torch.Tensor] = None) -> torch.Tensor:
    like = like if like is not None else torch.empty(0)
    z_bytes, y_bytes = unpack_chunk(payload, frame_index)
    try:
        z_symbols = range_decode(z_bytes, _channel_indexes(z_shape), tables.prior)
        z_hat = _from_symbols(z_symbols, z_shape, like)
        sigma = model.scales(z_hat)
        indexes = model.gaussian.build_indexes(sigma)
        y_symbols = range_decode(y_bytes, indexes, tables.gaussian)
    except RangeCoderError as e:
        raise RangeCoderError(str(e), frame_index) from e
    return model.g_s(_from_symbols(y_symbols, y_shape, like))


class EncodedSequence(NamedTuple):
    bitstream: Bitstream
    reconstructions: torch.Tensor
    estimated_bits: float


def _stack_frames(frames) -> torch.Tensor:
    if isinstance(frames, torch.Tensor):
        stacked = frames
    else:
        if len(frames) == 0:
            raise InvalidArgumentError("Cannot compress an empty frame list")
        shapes = {tuple(f.shape) for f in frames}
        if len(shapes) != 1:
            raise InvalidArgumentError(f"All frames must share one shape, got {sorted(shapes)}")
        stacked = torch.stack(list(frames))
    if stacked.dim() != 4 or stacked.shape[0] == 0:
        raise InvalidArgumentError(f"Expected a non-empty (T, C, H, W) clip, got {tuple(stacked.shape)}")
    return stacked


@torch.no_grad()
def encode_sequence(frames, codec: VideoCodec, plan: Optional[GopPlan] = None,
                    tables: Optional[Dict[str, CodingTables]] = None,
                    digest: Optional[bytes] = None) -> EncodedSequence:
    """Closed-loop encode; reconstructions are the ones any decoder will reproduce"""
    from ssfcodec.checkpoint import model_digest

    plan = plan or GopPlan()
    clip = _stack_frames(frames)
    frame_count, channels, height, width = clip.shape
    codec.config.validate_frame(height, width)
    if channels != codec.config.image_channels:
        raise InvalidArgumentError(f"Model codes {codec.config.image_channels} channels, clip has {channels}")
    tables = tables or build_coding_tables(codec)
    header = StreamHeader(width, height, channels, plan.gop_size, digest or model_digest(codec), frame_count)

    codec.eval()
    stream = Bitstream(header)
    reconstructions = []
    estimated_bits = 0.0
    reference = None
    for index in range(frame_count):
        x = clip[index:index + 1]
        if plan.is_intra(index):
            decoded, chunk, bits = encode_latents(codec.iframe, x, tables['iframe'])
            reference = decoded.clamp(0.0, 1.0)
            stream.chunks.append(chunk)
            estimated_bits += bits
            logger.debug(f"frame {index}: I chunk {len(chunk)} bytes")
            reconstructions.append(reference[0])
            continue
        raw, motion_chunk, motion_bits = encode_latents(
            codec.pframe.motion, torch.cat([x, reference], dim=1), tables['motion']
        )
        prediction = motion_compensate(
            reference, FlowField.from_decoder_output(raw, codec.pframe.scale_space.num_scales), codec.pframe
        )
        decoded_residual, residual_chunk, residual_bits = encode_latents(
            codec.pframe.residual, x - prediction, tables['residual']
        )
        reference = (prediction + decoded_residual).clamp(0.0, 1.0)
        stream.chunks.extend([motion_chunk, residual_chunk])
        estimated_bits += motion_bits + residual_bits
        logger.debug(f"frame {index}: P chunks {len(motion_chunk)} + {len(residual_chunk)} bytes")
        reconstructions.append(reference[0])

    logger.debug(f"Encoded {frame_count} frames ({plan.pattern(frame_count)}) into {stream.total_bytes} bytes")
    return EncodedSequence(stream, torch.stack(reconstructions), estimated_bits)


def compress_gop(frames, codec: VideoCodec, plan: Optional[GopPlan] = None) -> Bitstream:
    return encode_sequence(frames, codec, plan).bitstream


@torch.no_grad()
def iter_decode(data: Union[bytes, Bitstream], codec: VideoCodec,
                tables: Optional[Dict[str, CodingTables]] = None,
                check_digest: bool = True) -> Iterator[torch.Tensor]:
    """Yield (C, H, W) reconstructions in order; errors name the first frame that cannot be decoded"""
    from ssfcodec.checkpoint import model_digest

    if isinstance(data, Bitstream):
        data = data.to_bytes()
    header = StreamHeader.unpack(data)
    cfg = codec.config
    if check_digest and header.digest != model_digest(codec):
        raise BitstreamError("Stream was produced by a different model checkpoint")
    if header.channels != cfg.image_channels:
        raise BitstreamError(f"Stream has {header.channels} channels, model codes {cfg.image_channels}")
    cfg.validate_frame(header.height, header.width)
    tables = tables or build_coding_tables(codec)
    y_shape = cfg.latent_shape(header.height, header.width)
    z_shape = cfg.hyper_shape(header.height, header.width)
    like = next(codec.parameters())

    codec.eval()
    reference = None
    motion_payload = None
    for frame_index, kind, payload in iter_chunks(data, header):
        if kind == INTRA:
            decoded = decode_latents(codec.iframe, payload, y_shape, z_shape, tables['iframe'], frame_index, like)
            reference = decoded.clamp(0.0, 1.0)
            yield reference[0]
        elif kind == MOTION:
            motion_payload = payload
        else:
            raw = decode_latents(codec.pframe.motion, motion_payload, y_shape, z_shape, tables['motion'],
                                 frame_index, like)
            prediction = motion_compensate(
                reference, FlowField.from_decoder_output(raw, codec.pframe.scale_space.num_scales), codec.pframe
            )
            decoded_residual = decode_latents(codec.pframe.residual, payload, y_shape, z_shape,
                                              tables['residual'], frame_index, like)
            reference = (prediction + decoded_residual).clamp(0.0, 1.0)
            yield reference[0]


def decompress_gop(data: Union[bytes, Bitstream], codec: VideoCodec) -> torch.Tensor:
    """(T, C, H, W) reconstructions of every frame in the stream"""
    frames = list(iter_decode(data, codec))
    if not frames:
        return torch.empty(0)
    return torch.stack(frames)
