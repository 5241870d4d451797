"""
Container format: fixed header followed by length-prefixed chunks in decode order
"""
import struct
import zlib
import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Tuple

from ssfcodec.errors import BitstreamError, DecodeError

logger = logging.getLogger(__name__)

MAGIC = b'SSFV'
FORMAT_VERSION = 1
HEADER_FORMAT = '<4sBHHBB16sI'
HEADER_SIZE = struct.calcsize(HEADER_FORMAT)
LENGTH_PREFIX = struct.Struct('<I')
CHUNK_HEAD = struct.Struct('<II')

INTRA = 'I'
MOTION = 'M'
RESIDUAL = 'R'


@dataclass
class StreamHeader:
    width: int
    height: int
    channels: int
    gop_size: int
    digest: bytes
    frame_count: int
    version: int = FORMAT_VERSION

    def pack(self) -> bytes:
        for name, value, limit in (('width', self.width, 0xFFFF), ('height', self.height, 0xFFFF),
                                   ('channels', self.channels, 0xFF), ('gop_size', self.gop_size, 0xFF)):
            if not 0 < value <= limit:
                raise BitstreamError(f"Header field {name}={value} outside 1..{limit}")
        if len(self.digest) != 16:
            raise BitstreamError(f"Model digest must be 16 bytes, got {len(self.digest)}")
        return struct.pack(HEADER_FORMAT, MAGIC, self.version, self.width, self.height,
                           self.channels, self.gop_size, self.digest, self.frame_count)

    @classmethod
    def unpack(cls, data: bytes) -> 'StreamHeader':
        if len(data) < HEADER_SIZE:
            raise BitstreamError(f"Stream of {len(data)} bytes is shorter than the {HEADER_SIZE}-byte header")
        magic, version, width, height, channels, gop_size, digest, frame_count = struct.unpack(
            HEADER_FORMAT, data[:HEADER_SIZE]
        )
        if magic != MAGIC:
            raise BitstreamError(f"Bad magic {magic!r}, expected {MAGIC!r}")
        if version != FORMAT_VERSION:
            raise BitstreamError(f"Unsupported format version {version}")
        if min(width, height, channels, gop_size) == 0:
            raise BitstreamError("Header holds a zero dimension")
        return cls(width, height, channels, gop_size, digest, frame_count, version)


def chunk_layout(frame_count: int, gop_size: int) -> Iterator[Tuple[int, str]]:
    """(frame index, chunk kind) for every chunk, in decode order"""
    for index in range(frame_count):
        if index % gop_size == 0:
            yield index, INTRA
        else:
            yield index, MOTION
            yield index, RESIDUAL


def max_frame_count(data_length: int) -> int:
    """Every frame needs at least one length prefix after the header"""
    return max(data_length - HEADER_SIZE, 0) // LENGTH_PREFIX.size


@dataclass
class Bitstream:
    header: StreamHeader
    chunks: List[bytes] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        parts = [self.header.pack()]
        for chunk in self.chunks:
            parts.append(LENGTH_PREFIX.pack(len(chunk)))
            parts.append(chunk)
        return b''.join(parts)

    @property
    def payload_bytes(self) -> int:
        """Bytes after the header, length prefixes included"""
        return sum(LENGTH_PREFIX.size + len(chunk) for chunk in self.chunks)

    @property
    def total_bytes(self) -> int:
        return HEADER_SIZE + self.payload_bytes

    def layout(self) -> List[Tuple[int, str]]:
        return list(chunk_layout(self.header.frame_count, self.header.gop_size))

    @classmethod
    def from_bytes(cls, data: bytes) -> 'Bitstream':
        header = StreamHeader.unpack(data)
        chunks = [chunk for _, _, chunk in iter_chunks(data, header)]
        return cls(header, chunks)


def iter_chunks(data: bytes, header: StreamHeader) -> Iterator[Tuple[int, str, bytes]]:
    """Yield (frame index, kind, payload) lazily; truncation is reported at the affected frame"""
    limit = max_frame_count(len(data))
    if header.frame_count > limit:
        raise BitstreamError(
            f"Header announces {header.frame_count} frames but {len(data)} bytes hold at most {limit}"
        )
    offset = HEADER_SIZE
    for frame_index, kind in chunk_layout(header.frame_count, header.gop_size):
        if offset + LENGTH_PREFIX.size > len(data):
            raise BitstreamError("Stream truncated before chunk length", frame_index)
        (length,) = LENGTH_PREFIX.unpack_from(data, offset)
        offset += LENGTH_PREFIX.size
        if offset + length > len(data):
            raise BitstreamError(f"Chunk of {length} bytes runs past the end of the stream", frame_index)
        yield frame_index, kind, bytes(data[offset:offset + length])
        offset += length
    if offset != len(data):
        raise BitstreamError(f"{len(data) - offset} unexpected bytes after the last chunk")


def pack_chunk(z_bytes: bytes, y_bytes: bytes) -> bytes:
    """[u32 crc32 of the rest][u32 z length][z bytes][y bytes]"""
    body = struct.pack('<I', len(z_bytes)) + z_bytes + y_bytes
    return struct.pack('<I', zlib.crc32(body)) + body


def unpack_chunk(payload: bytes, frame_index=None) -> Tuple[bytes, bytes]:
    if len(payload) < CHUNK_HEAD.size:
        raise DecodeError(f"Chunk of {len(payload)} bytes is too short", frame_index)
    crc, z_length = CHUNK_HEAD.unpack_from(payload)
    if zlib.crc32(payload[4:]) != crc:
        raise DecodeError("Chunk checksum mismatch", frame_index)
    if CHUNK_HEAD.size + z_length > len(payload):
        raise DecodeError(f"Hyper-latent length {z_length} exceeds the chunk", frame_index)
    z_end = CHUNK_HEAD.size + z_length
    return payload[CHUNK_HEAD.size:z_end], payload[z_end:]
