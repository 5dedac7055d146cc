import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from footlift.kinematics import Skeleton

settings.register_profile("repo", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")
torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def skeleton():
    return Skeleton()
