"""Primitive geometry: rigid transforms, planes, convex polygons, 2D PCA.

Conventions used throughout the package:

* World frame is right-handed with +Y up.
* Yaw is a rotation about +Y with matrix rows
  ``[[c, 0, s], [0, 1, 0], [-s, 0, c]]``.
* The horizontal projection of a point ``(x, y, z)`` is ``(x, -z)``, which
  makes a world yaw by ``theta`` a standard counterclockwise 2D rotation by
  ``theta`` in the projected plane.
* Footprint polygons live directly in ``(x, z)`` coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, NonConvexInput

F64 = np.float64
Vec3 = np.ndarray  # shape (3,)
Mat3 = np.ndarray  # shape (3, 3)
Points = np.ndarray  # shape (N, 3)
Points2D = np.ndarray  # shape (N, 2)

# Consecutive polygon vertices closer than this are considered duplicates.
VERTEX_EPS = 1e-9
# Variance below this means the cloud is collapsed to a point (1e-12 m)^2.
_COINCIDENT_VAR = 1e-24


def yaw_matrix(theta: float) -> Mat3:
    """Rotation about +Y by ``theta`` radians."""
    c = math.cos(theta)
    s = math.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]], dtype=F64)


@dataclass(frozen=True, slots=True)
class RigidTransform:
    """SE(3) transform ``p -> rotation @ p + translation``."""

    rotation: Mat3
    translation: Vec3

    def __post_init__(self) -> None:
        r = np.asarray(self.rotation, dtype=F64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=F64).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-6:
            raise DegenerateInput("rotation is not orthonormal")
        if abs(float(np.linalg.det(r)) - 1.0) > 1e-6:
            raise DegenerateInput("rotation determinant is not +1")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_yaw(cls, theta: float, translation=None) -> "RigidTransform":
        t = np.zeros(3) if translation is None else np.asarray(translation, dtype=F64)
        return cls(yaw_matrix(theta), t)

    def apply(self, points: Points) -> Points:
        pts = np.asarray(points, dtype=F64)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self o other (``other`` applied first)."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation))

    def almost_equal(self, other: "RigidTransform", tol: float = 1e-12) -> bool:
        return (
            np.abs(self.rotation - other.rotation).max() <= tol
            and np.abs(self.translation - other.translation).max() <= tol
        )


@dataclass(frozen=True, slots=True)
class Plane:
    """Plane ``normal . x = offset`` with a unit normal."""

    normal: Vec3
    offset: float

    def __post_init__(self) -> None:
        n = np.asarray(self.normal, dtype=F64).reshape(3)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))
        if abs(float(np.linalg.norm(n)) - 1.0) > 1e-6:
            raise DegenerateInput("plane normal must be unit length")

    @classmethod
    def horizontal(cls, elevation: float = 0.0) -> "Plane":
        return cls(np.array([0.0, 1.0, 0.0]), elevation)

    def signed_distance(self, points: Points) -> np.ndarray:
        return np.asarray(points, dtype=F64) @ self.normal - self.offset

    def flipped(self) -> "Plane":
        return Plane(-self.normal, -self.offset)


@dataclass(frozen=True, slots=True)
class Polygon2D:
    """Simple polygon with counterclockwise vertex order.

    The empty polygon (zero vertices) is allowed and represents an empty
    intersection result; polygons with one or two vertices are rejected.
    """

    vertices: Points2D

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=F64).reshape(-1, 2)
        n = v.shape[0]
        if n == 0:
            object.__setattr__(self, "vertices", v)
            return
        if n < 3:
            raise DegenerateInput(f"polygon needs 0 or >= 3 vertices, got {n}")
        gaps = np.linalg.norm(v - np.roll(v, -1, axis=0), axis=1)
        if gaps.min() < VERTEX_EPS:
            raise DegenerateInput("consecutive duplicate polygon vertices")
        if _signed_area(v) < 0.0:
            v = v[::-1].copy()
        object.__setattr__(self, "vertices", v)

    @classmethod
    def empty(cls) -> "Polygon2D":
        return cls(np.zeros((0, 2)))

    @classmethod
    def rectangle(cls, center, size, theta: float = 0.0) -> "Polygon2D":
        """Axis rectangle of ``size=(w, d)`` rotated by yaw ``theta``.

        Corners follow the package yaw convention: a local offset
        ``(dx, dz)`` maps to world ``(c*dx + s*dz, -s*dx + c*dz)``.
        """
        cx, cz = float(center[0]), float(center[1])
        hw, hd = float(size[0]) / 2.0, float(size[1]) / 2.0
        c = math.cos(theta)
        s = math.sin(theta)
        local = [(hw, hd), (-hw, hd), (-hw, -hd), (hw, -hd)]
        pts = [(cx + c * dx + s * dz, cz - s * dx + c * dz) for dx, dz in local]
        return cls(np.array(pts, dtype=F64))

    @property
    def is_empty(self) -> bool:
        return self.vertices.shape[0] == 0


def _signed_area(vertices: np.ndarray) -> float:
    x = vertices[:, 0]
    y = vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_area(poly: Polygon2D) -> float:
    """Area of a polygon; the empty polygon has area 0."""
    if poly.is_empty:
        return 0.0
    return max(0.0, _signed_area(poly.vertices))


def check_convex(poly: Polygon2D) -> None:
    """Raise NonConvexInput if ``poly`` has a reflex vertex.

    Collinear triples are tolerated; only strictly negative turns relative
    to the edge-length scale count as reflex.
    """
    if poly.is_empty:
        return
    v = poly.vertices
    n = v.shape[0]
    e = np.roll(v, -1, axis=0) - v
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    lengths = np.linalg.norm(e, axis=1)
    scale = lengths * np.roll(lengths, -1)
    if np.any(cross < -1e-9 * np.maximum(scale, 1e-30)):
        raise NonConvexInput(f"polygon with {n} vertices has a reflex vertex")


def _clip_core(subject: list, clip: list) -> list:
    """Sutherland-Hodgman core on vertex tuple lists (clip must be convex CCW)."""
    output = subject
    m = len(clip)
    for k in range(m):
        if not output:
            break
        ax, ay = clip[k]
        bx, by = clip[(k + 1) % m]
        ex = bx - ax
        ey = by - ay
        inputs = output
        output = []
        px, py = inputs[-1]
        prev_side = ex * (py - ay) - ey * (px - ax)
        for cx, cy in inputs:
            side = ex * (cy - ay) - ey * (cx - ax)
            if side >= 0.0:
                if prev_side < 0.0:
                    t = prev_side / (prev_side - side)
                    output.append((px + t * (cx - px), py + t * (cy - py)))
                output.append((cx, cy))
            elif prev_side >= 0.0:
                t = prev_side / (prev_side - side)
                output.append((px + t * (cx - px), py + t * (cy - py)))
            px, py, prev_side = cx, cy, side
    return output


def _dedupe_ring(points: list) -> list:
    out: list = []
    for p in points:
        if not out or math.hypot(p[0] - out[-1][0], p[1] - out[-1][1]) >= VERTEX_EPS:
            out.append(p)
    while len(out) >= 2 and math.hypot(out[0][0] - out[-1][0], out[0][1] - out[-1][1]) < VERTEX_EPS:
        out.pop()
    return out


def convex_clip(subject: Polygon2D, clip: Polygon2D) -> Polygon2D:
    """Intersection of ``subject`` with a convex ``clip`` polygon.

    Returns the (possibly empty) intersection polygon. Raises
    NonConvexInput if the clip polygon is not convex.
    """
    check_convex(clip)
    if subject.is_empty or clip.is_empty:
        return Polygon2D.empty()
    result = _clip_core(
        [tuple(p) for p in subject.vertices],
        [tuple(p) for p in clip.vertices],
    )
    result = _dedupe_ring(result)
    if len(result) < 3:
        return Polygon2D.empty()
    return Polygon2D(np.array(result, dtype=F64))


def fit_plane_lsq(points: Points) -> Plane:
    """Total-least-squares plane through ``points``.

    Minimizes the sum of squared orthogonal distances (the plane normal is
    the eigenvector of the smallest covariance eigenvalue). The normal is
    oriented so that the majority of input points lie on the strictly
    positive side; an exact tie falls back to making the largest-magnitude
    normal component positive.
    """
    pts = np.asarray(points, dtype=F64).reshape(-1, 3)
    if pts.shape[0] < 3:
        raise DegenerateInput("plane fit needs at least 3 points")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / pts.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    # evals ascending; the plane needs two spanning directions.
    if evals[1] <= 1e-18 + 1e-12 * max(evals[2], 0.0):
        raise DegenerateInput("points are collinear or coincident")
    normal = evecs[:, 0]
    normal = normal / np.linalg.norm(normal)
    offset = float(normal @ centroid)
    dist = pts @ normal - offset
    pos = int(np.count_nonzero(dist > 0.0))
    neg = int(np.count_nonzero(dist < 0.0))
    flip = False
    if pos < neg:
        flip = True
    elif pos == neg:
        k = int(np.argmax(np.abs(normal)))
        flip = normal[k] < 0.0
    if flip:
        normal = -normal
        offset = -offset
    return Plane(normal, offset)


def gravity_align(plane: Plane) -> RigidTransform:
    """Minimal rotation mapping ``plane.normal`` to +Y, origin fixed.

    The rotation axis is ``normal x yhat``; an antiparallel normal is
    handled by a 180 degree rotation about X.
    """
    n = plane.normal
    y = np.array([0.0, 1.0, 0.0])
    c = float(n @ y)
    if c >= 1.0 - 1e-15:
        return RigidTransform.identity()
    if c <= -1.0 + 1e-15:
        rx = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
        return RigidTransform(rx, np.zeros(3))
    axis = np.cross(n, y)
    s = float(np.linalg.norm(axis))
    k = axis / s
    kmat = np.array(
        [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]]
    )
    rot = np.eye(3) + s * kmat + (1.0 - c) * (kmat @ kmat)
    return RigidTransform(rot, np.zeros(3))


def pca_axes_2d(points: Points2D) -> tuple[float, tuple[float, float]]:
    """Principal axes of a 2D point set.

    Returns ``(angle, (lam_major, lam_minor))`` where ``angle`` in
    ``[0, pi)`` is the direction of greatest variance and the eigenvalues
    are in descending order. Equal eigenvalues (isotropic set) break the
    tie toward the smallest angle, which the closed form realizes as 0.
    """
    pts = np.asarray(points, dtype=F64).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise DegenerateInput("empty point set")
    centered = pts - pts.mean(axis=0)
    n = pts.shape[0]
    a = float(centered[:, 0] @ centered[:, 0]) / n
    c = float(centered[:, 1] @ centered[:, 1]) / n
    b = float(centered[:, 0] @ centered[:, 1]) / n
    if max(a, c) <= _COINCIDENT_VAR:
        raise DegenerateInput("all points coincident")
    half_tr = 0.5 * (a + c)
    root = math.hypot(0.5 * (a - c), b)
    lam1 = half_tr + root
    lam2 = half_tr - root
    # atan2(0, 0) = 0 makes the isotropic tie-break the smallest angle.
    angle = 0.5 * math.atan2(2.0 * b, a - c)
    angle = angle % math.pi
    if angle >= math.pi:  # guard fmod edge at pi
        angle -= math.pi
    return angle, (lam1, max(lam2, 0.0))


def project_xz(points: Points) -> Points2D:
    """Drop Y and return ``(x, -z)`` so yaw acts counterclockwise."""
    pts = np.asarray(points, dtype=F64)
    return np.column_stack([pts[:, 0], -pts[:, 2]])
