import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def box_cloud(rng, size, center=(0.0, 0.0, 0.0), theta=0.0, n=4000, noise=0.0):
    """Points on the surface of a yawed box, resting sense: center given."""
    w, h, d = size
    half = np.array([w, h, d]) / 2.0
    # pick faces proportional to area
    areas = np.array([h * d, h * d, w * d, w * d, w * h, w * h], dtype=float)
    faces = rng.choice(6, size=n, p=areas / areas.sum())
    pts = rng.uniform(-half, half, size=(n, 3))
    axis = faces // 2
    side = np.where(faces % 2 == 0, 1.0, -1.0)
    pts[np.arange(n), axis] = half[axis] * side
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    pts = pts @ rot.T + np.asarray(center, dtype=float)
    if noise > 0.0:
        pts = pts + rng.normal(0.0, noise, size=pts.shape)
    return pts


@pytest.fixture(scope="session")
def room_dir(tmp_path_factory):
    from scenelift.fixtures import generate_room_fixture

    out = tmp_path_factory.mktemp("room")
    generate_room_fixture(out, seed=0, scale=2.5)
    return out


@pytest.fixture(scope="session")
def catalog_dir(tmp_path_factory):
    from scenelift.fixtures import generate_catalog_fixture

    out = tmp_path_factory.mktemp("catalog")
    generate_catalog_fixture(out, seed=7, n_assets=20)
    return out
