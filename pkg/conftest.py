import os

import pytest
import torch

from ssfcodec.config import TestingConfig
from ssfcodec import set_deterministic
from ssfcodec.codec.models import CodecConfig, build_codec
from ssfcodec.data import gen_synthetic

FAMILIES = ['conv', 'swin', 'flawin']


def pytest_collection_modifyitems(config, items):
    if os.environ.get('SSF_RUN_SLOW', '').lower() in ['1', 'true', 'on']:
        return
    skip_slow = pytest.mark.skip(reason='set SSF_RUN_SLOW=1 to run')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def deterministic():
    set_deterministic(True)
    torch.manual_seed(0)
    yield


@pytest.fixture
def profile():
    return TestingConfig


def tiny_config(family='flawin', **overrides) -> CodecConfig:
    return CodecConfig.from_profile(TestingConfig, family=family, **overrides)


@pytest.fixture
def tiny_codec():
    return build_codec(tiny_config('flawin'), seed=0)


@pytest.fixture(params=FAMILIES)
def family_codec(request):
    return build_codec(tiny_config(request.param), seed=0)


@pytest.fixture
def synthetic():
    return gen_synthetic(12, 64, seed=3)
