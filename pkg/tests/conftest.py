"""
conftest.py - Puts app/ on the import path and registers hypothesis profiles
"""

import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

APP_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "app")
if APP_PATH not in sys.path:
    sys.path.insert(0, APP_PATH)

settings.register_profile(
    "default",
    max_examples=20,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("thorough", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
