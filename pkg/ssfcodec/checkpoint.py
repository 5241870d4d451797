"""
Checkpoint persistence and the model digest stamped into every bitstream
"""
import os
import json
import hashlib
import logging
from datetime import datetime
from typing import Optional

import torch

from ssfcodec.codec.models import CodecConfig, VideoCodec
from ssfcodec.entropy.models import is_derived_state
from ssfcodec.errors import ConfigurationError, DataError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1


def persistent_state(codec: VideoCodec):
    """state_dict without the entropy tables and prior quantiles, which are rebuilt before coding"""
    return {k: v for k, v in codec.state_dict().items() if not is_derived_state(k)}


def model_digest(codec: VideoCodec) -> bytes:
    """16-byte MD5 over the config JSON and the persistent state in sorted name order"""
    hash_md5 = hashlib.md5()
    hash_md5.update(json.dumps(codec.config.to_dict(), sort_keys=True).encode('utf-8'))
    state = persistent_state(codec)
    for name in sorted(state):
        tensor = state[name].detach().cpu().contiguous()
        hash_md5.update(name.encode('utf-8'))
        hash_md5.update(str(tensor.dtype).encode('utf-8'))
        hash_md5.update(tensor.numpy().tobytes())
    return hash_md5.digest()


def save_checkpoint(codec: VideoCodec, path: str, metadata: Optional[dict] = None) -> str:
    """Write atomically (temp file then rename)"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    payload = {
        'format_version': CHECKPOINT_FORMAT,
        'config': codec.config.to_dict(),
        'state_dict': {k: v.detach().cpu() for k, v in persistent_state(codec).items()},
        'metadata': dict(metadata or {}, saved_at=datetime.now().isoformat()),
        'digest': model_digest(codec).hex(),
    }
    tmp_path = f"{path}.tmp"
    torch.save(payload, tmp_path)
    os.replace(tmp_path, path)
    logger.info(f"Saved {codec.family} checkpoint to {path}")
    return path


def load_checkpoint(path: str, map_location='cpu'):
    """Returns (codec, metadata); the stored digest must match the rebuilt model"""
    if not os.path.isfile(path):
        raise DataError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location=map_location, weights_only=False)
    except Exception as e:
        raise DataError(f"Could not read checkpoint {path}: {e}")
    if payload.get('format_version') != CHECKPOINT_FORMAT:
        raise ConfigurationError(f"Unsupported checkpoint format {payload.get('format_version')} in {path}")

    codec = VideoCodec(CodecConfig.from_dict(payload['config']))
    try:
        missing, unexpected = codec.load_state_dict(payload['state_dict'], strict=False)
    except RuntimeError as e:
        raise DataError(f"Checkpoint {path} does not match its config: {e}")
    missing = [k for k in missing if not is_derived_state(k)]
    if missing or unexpected:
        raise DataError(f"Checkpoint {path} does not match its config: missing {missing}, unexpected {unexpected}")
    codec.eval()
    stored = payload.get('digest')
    if stored and stored != model_digest(codec).hex():
        raise DataError(f"Checkpoint {path} is corrupt: digest mismatch")
    return codec, payload.get('metadata', {})
