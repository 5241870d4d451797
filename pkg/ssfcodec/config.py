"""
Configuration profiles: desk (default), paper and testing, with environment overrides
"""
import os
from dotenv import load_dotenv

load_dotenv()


def _flag(name, default='false'):
    return os.environ.get(name, default).lower() in ['true', 'on', '1']


class Config:
    # Logging
    LOG_LEVEL = os.environ.get('SSF_LOG_LEVEL') or 'INFO'
    LOG_DIR = os.environ.get('SSF_LOG_DIR') or 'logs'
    LOG_TO_STDOUT = _flag('SSF_LOG_TO_STDOUT', 'true')

    # Deterministic math: single intra-op thread, deterministic kernels
    DETERMINISTIC = _flag('SSF_DETERMINISTIC', 'true')
    SEED = int(os.environ.get('SSF_SEED', 0))

    # Model
    FAMILY = os.environ.get('SSF_FAMILY') or 'flawin'
    IMAGE_CHANNELS = 1
    EMBED_DIM = 16
    LATENT_CHANNELS = 32
    HYPER_CHANNELS = 32
    PATCH_SIZE = 2
    STAGE_DEPTHS = [2, 2, 2, 2]
    NUM_HEADS = [2, 4, 8, 16]
    WINDOW_SIZE = 4
    FLAFF_EXPANSION = 3.0
    SCALES = [0.5, 1.0, 2.0, 4.0, 8.0]
    KERNEL_TRUNCATION = 3.0

    # Entropy coding
    SIGMA_FLOOR = 0.11
    TAIL_MASS = 1e-9
    LIKELIHOOD_FLOOR = 2.0 ** -32
    CODER_PRECISION = 16

    # Training
    LAMBDA = 0.01
    LAMBDA_SWEEP = [0.00125, 0.0025, 0.005, 0.01, 0.02, 0.04, 0.08, 0.160, 0.320]
    EPOCHS = 2
    STEPS_PER_EPOCH = 250
    BATCH_SIZE = 8
    CROP = 64
    LR_INITIAL = 1e-4
    LR_FINAL = 1.2e-6
    CHUNK_LENGTH = 4
    GRAD_CLIP = 1.0
    LOG_EVERY = 25

    # Data / evaluation
    TEST_GOP_SIZE = 30
    PSNR_CAP_DB = 100.0
    BPP_INCLUDE_HEADER = True


class DeskConfig(Config):
    pass


class PaperConfig(Config):
    EMBED_DIM = 32
    LATENT_CHANNELS = 128
    HYPER_CHANNELS = 128
    EPOCHS = 100
    STEPS_PER_EPOCH = 1000
    BATCH_SIZE = 16
    CROP = 256
    LR_INITIAL = 1e-4
    LR_FINAL = 1.2e-6
    LOG_EVERY = 100


class TestingConfig(Config):
    LOG_TO_STDOUT = True
    DETERMINISTIC = True
    EMBED_DIM = 6
    LATENT_CHANNELS = 8
    HYPER_CHANNELS = 8
    NUM_HEADS = [1, 1, 2, 2]
    EPOCHS = 1
    STEPS_PER_EPOCH = 10
    BATCH_SIZE = 2
    CROP = 64
    LOG_EVERY = 5


config = {
    'desk': DeskConfig,
    'paper': PaperConfig,
    'testing': TestingConfig,
    'default': DeskConfig
}


def get_config(name=None):
    """Resolve a profile class by name, falling back to SSF_PROFILE then 'default'"""
    name = name or os.environ.get('SSF_PROFILE', 'default')
    if name not in config:
        raise KeyError(f"Unknown profile '{name}', expected one of {sorted(config)}")
    return config[name]
