import os

import pytest
from hypothesis import HealthCheck, settings

from droneparking.grid import StageConfig

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def cfg():
    return StageConfig()


@pytest.fixture
def small_cfg():
    return StageConfig(extent=(10, 10, 8), t_last=60)
