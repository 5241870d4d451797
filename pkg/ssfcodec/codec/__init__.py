from ssfcodec.codec.models import (
    CodecConfig, HyperpriorAutoencoder, IFrameModel, PFrameModel, VideoCodec, build_codec
)
from ssfcodec.codec.bitstream import Bitstream, StreamHeader, HEADER_SIZE, chunk_layout
from ssfcodec.codec.pipeline import (
    GopPlan, LatentCode, code_iframe, motion_estimate_code, code_pframe,
    encode_sequence, compress_gop, decompress_gop, iter_decode
)
