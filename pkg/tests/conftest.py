import pytest

from helpers import make_config
from slicekit.model import random_model


@pytest.fixture
def small_rms_model():
    return random_model(make_config(), seed=11)


@pytest.fixture
def small_ln_model():
    return random_model(make_config(norm_kind="layernorm"), seed=12)
