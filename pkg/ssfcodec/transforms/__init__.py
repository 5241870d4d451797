from ssfcodec.transforms.networks import (
    TransformConfig, TransformFamily, build_encoder, build_decoder, count_parameters
)
from ssfcodec.transforms.patching import TokenMap, patchify, unpatchify

__all__ = [
    'TransformConfig', 'TransformFamily', 'build_encoder', 'build_decoder',
    'count_parameters', 'TokenMap', 'patchify', 'unpatchify',
]
