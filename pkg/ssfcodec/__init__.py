"""
Scale-space flow video compression toolkit
Conv, Swin and FLaWin transform families sharing one I/P-frame pipeline
"""
import os
import logging
from logging.handlers import RotatingFileHandler

import torch

__version__ = '0.1.0'

LOG_FORMAT = '%(asctime)s %(levelname)s: %(message)s [in %(pathname)s:%(lineno)d]'

logger = logging.getLogger(__name__)


def setup_logging(level='INFO', log_dir='logs', to_stdout=True):
    """Attach a single handler to the package logger"""
    package_logger = logging.getLogger(__name__)
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)

    if to_stdout:
        handler = logging.StreamHandler()
    else:
        try:
            os.makedirs(log_dir, exist_ok=True)
            handler = RotatingFileHandler(
                os.path.join(log_dir, 'ssfcodec.log'),
                maxBytes=10240000,
                backupCount=10
            )
        except OSError as e:
            print(f"Warning: Could not setup file logging in {log_dir}: {e}")
            handler = logging.StreamHandler()

    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    package_logger.addHandler(handler)
    package_logger.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    return package_logger


def set_deterministic(enabled=True):
    """Deterministic-math mode (SSF_DETERMINISTIC): required for closed-loop bit-exactness"""
    if enabled:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)
        logger.debug("Deterministic math enabled")
    else:
        torch.use_deterministic_algorithms(False)
