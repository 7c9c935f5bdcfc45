import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mctr.scan_frontend import Scan2D
from mctr.sim import SensorConfig, raycast_scan
from mctr.tracks import TrackMap

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def corridor_track(half_width=1.0, length=100.0, name="corridor") -> TrackMap:
    """Straight corridor along x. The inner polygon is a speck far downstream,
    out of sensor range from the middle."""
    h = half_width
    outer = [(-length / 2, -h), (length / 2, -h), (length / 2, h), (-length / 2, h)]
    inner = [(length / 2 - 2.0, -1e-3), (length / 2 - 1.998, -1e-3), (length / 2 - 1.999, 1e-3)]
    xs = np.arange(-length / 2 + 1, length / 2 - 1, 0.05)
    center = np.column_stack([xs, np.zeros_like(xs), np.zeros_like(xs)])
    return TrackMap(name, inner, outer, center, (0.0, 0.0, 0.0))


def corridor_scan(offset=0.0, heading=0.0, half_width=1.0, beams=1081, sigma=0.0) -> Scan2D:
    return raycast_scan(corridor_track(half_width), (0.0, offset, heading),
                        SensorConfig(beams=beams, noise_sigma=sigma))


@pytest.fixture
def corridor():
    return corridor_track()


def rotate(xy, theta):
    c, s = math.cos(theta), math.sin(theta)
    xy = np.asarray(xy, dtype=float)
    return xy @ np.array([[c, s], [-s, c]])
