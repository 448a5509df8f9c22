import numpy as np
import pytest

from dpcore.adapt import AdaptState
from dpcore.extractor import make_linear_additive, make_mlp_prepend
from dpcore.testbed import TestbedConfig, make_testbed


@pytest.fixture(scope="session")
def testbed():
    return make_testbed(TestbedConfig(seed=0))


@pytest.fixture
def fresh_state(testbed):
    def make(**kw):
        return AdaptState.create(testbed.extractor, testbed.source_stats, **kw)
    return make


@pytest.fixture
def linear_eye():
    return make_linear_additive(4, weight=np.eye(4))


@pytest.fixture
def mlp():
    return make_mlp_prepend(5, d_hidden=7, d_f=3, seed=11)
