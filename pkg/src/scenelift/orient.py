"""Gravity-aligned orientation and oriented bounding boxes.

Yaw is estimated from the direction of greatest variance of the
ground-projected cloud, so it carries an inherent 0/pi ambiguity that is
resolved later during asset registration.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .geom import (
    Plane,
    RigidTransform,
    gravity_align,
    pca_axes_2d,
    project_xz,
    yaw_matrix,
)

# Extents below FLAT_EPS are treated as flat and floored to MIN_EXTENT
# (rugs and wall art would otherwise produce zero-volume boxes).
FLAT_EPS = 1e-6
MIN_EXTENT = 1e-3
TRIM_FRACTION = 0.01


@dataclass(frozen=True, slots=True)
class OrientedBox:
    """Gravity-aligned box: center (m), size (w, h, d in m), yaw theta."""

    center: np.ndarray
    size: np.ndarray
    theta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        object.__setattr__(self, "size", np.asarray(self.size, dtype=np.float64).reshape(3))
        object.__setattr__(self, "theta", float(self.theta))
        if not np.all(self.size > 0.0):
            raise ValueError("box size components must be positive")

    @property
    def y_min(self) -> float:
        return float(self.center[1] - self.size[1] / 2.0)

    @property
    def y_max(self) -> float:
        return float(self.center[1] + self.size[1] / 2.0)


@dataclass(frozen=True, slots=True)
class PosePair:
    """The two yaw hypotheses of a PCA orientation: theta and theta + pi."""

    primary: RigidTransform
    flipped: RigidTransform


def estimate_orientation(cloud: np.ndarray, ground: Plane) -> float:
    """Yaw in [0, pi) of the cloud's dominant horizontal direction.

    The cloud is rotated so the ground normal becomes +Y, projected onto
    the horizontal plane, and the principal 2D axis direction is returned.
    """
    aligned = gravity_align(ground).apply(cloud)
    theta, _ = pca_axes_2d(project_xz(aligned))
    return theta


def fit_obb(
    cloud: np.ndarray,
    theta: float,
    ground: Plane,
    trim_fraction: float = TRIM_FRACTION,
) -> OrientedBox:
    """Trimmed oriented bounding box at the given yaw.

    In the gravity-aligned, theta-rotated frame the size is the per-axis
    extent of the central ``1 - 2*trim_fraction`` quantile span; the
    center is the span midpoint mapped back to the input frame. Extents
    below ``FLAT_EPS`` are floored to ``MIN_EXTENT`` with a warning.
    """
    g = gravity_align(ground)
    aligned = g.apply(cloud)
    rot = yaw_matrix(theta)
    local = aligned @ rot  # row-vector form of R^T p
    lo = np.quantile(local, trim_fraction, axis=0)
    hi = np.quantile(local, 1.0 - trim_fraction, axis=0)
    size = hi - lo
    if np.any(size < FLAT_EPS):
        warnings.warn(
            "near-flat cloud: flooring box extent to 1e-3 m", stacklevel=2
        )
        size = np.maximum(size, MIN_EXTENT)
    mid_local = (lo + hi) / 2.0
    center_aligned = rot @ mid_local
    center = g.inverse().apply(center_aligned[np.newaxis, :])[0]
    return OrientedBox(center=center, size=size, theta=float(theta) % math.pi)


def pose_pair(box: OrientedBox) -> PosePair:
    """Both yaw hypotheses as rigid transforms onto the box center."""
    primary = RigidTransform.from_yaw(box.theta, box.center)
    flipped = RigidTransform.from_yaw(box.theta + math.pi, box.center)
    return PosePair(primary=primary, flipped=flipped)
