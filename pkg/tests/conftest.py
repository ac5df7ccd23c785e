import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("gridnav", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("gridnav")


def line_mask(shape, rho, theta_deg, half_width=0.5):
    """Pixels within ``half_width`` of ``x cos t + y sin t = rho``."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    t = math.radians(theta_deg)
    return np.abs(xs * math.cos(t) + ys * math.sin(t) - rho) <= half_width


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
