"""Deterministic box-proxy rasterizer.

Two views: a top-down orthographic map of object footprints and a
first-person pinhole projection of full boxes. No z-buffer; faces are
painter-sorted, which is sufficient for box proxies and keeps output
byte-identical across platforms. Colors derive from an FNV-1a hash of
the category string so they are stable across runs.

Image convention: (H, W, 3) uint8, row 0 at the top, pixel centers at
integer + 0.5. Top-down maps world +X right and +Z up. The pinhole
camera looks along +Z at yaw 0; positive yaw turns toward +X, positive
pitch looks up.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import SceneliftError, ShapeMismatch, TruncatedPayload
from .geom import yaw_matrix
from .scene import CameraPose, SceneDocument

BACKGROUND = (240, 240, 240)
ROOM_OUTLINE = (0, 0, 0)
NEAR_PLANE = 0.05  # m
FIT_MARGIN = 1.1  # 10% on the fitted world extent

_FNV_OFFSET = 2166136261
_FNV_PRIME = 16777619


def category_color(category: str) -> tuple:
    """Stable RGB for a category: FNV-1a 32-bit over UTF-8 bytes."""
    h = _FNV_OFFSET
    for byte in category.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFF
    return ((h >> 16) & 0xFF, (h >> 8) & 0xFF, h & 0xFF)


def new_image(resolution: tuple, color: tuple = BACKGROUND) -> np.ndarray:
    w, h = int(resolution[0]), int(resolution[1])
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:, :] = color
    return img


def _fill_convex(img: np.ndarray, pts: np.ndarray, color: tuple) -> None:
    """Fill a convex polygon given in float pixel coordinates.

    A pixel is painted when its center lies inside or on the boundary.
    Degenerate (edge-on) polygons paint nothing.
    """
    pts = np.asarray(pts, dtype=np.float64)
    n = len(pts)
    if n < 3:
        return
    area2 = 0.0
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        area2 += x1 * y2 - x2 * y1
    if abs(area2) < 1e-12:
        return
    if area2 < 0.0:
        pts = pts[::-1]
    h, w = img.shape[:2]
    xa = max(0, int(math.floor(pts[:, 0].min() - 0.5)))
    xb = min(w - 1, int(math.ceil(pts[:, 0].max() + 0.5)))
    ya = max(0, int(math.floor(pts[:, 1].min() - 0.5)))
    yb = min(h - 1, int(math.ceil(pts[:, 1].max() + 0.5)))
    if xa > xb or ya > yb:
        return
    px = np.arange(xa, xb + 1, dtype=np.float64) + 0.5
    py = np.arange(ya, yb + 1, dtype=np.float64) + 0.5
    grid_x, grid_y = np.meshgrid(px, py)
    inside = np.ones(grid_x.shape, dtype=bool)
    for i in range(len(pts)):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % len(pts)]
        inside &= (x2 - x1) * (grid_y - y1) - (y2 - y1) * (grid_x - x1) >= -1e-9
    region = img[ya : yb + 1, xa : xb + 1]
    region[inside] = color


def _draw_line(img: np.ndarray, p0, p1, color: tuple) -> None:
    """Integer Bresenham between the pixels containing two float points."""
    h, w = img.shape[:2]
    x0 = int(round(p0[0] - 0.5))
    y0 = int(round(p0[1] - 0.5))
    x1 = int(round(p1[0] - 0.5))
    y1 = int(round(p1[1] - 0.5))
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        if 0 <= x0 < w and 0 <= y0 < h:
            img[y0, x0] = color
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def _footprint_corners(obj) -> np.ndarray:
    """World (x, z) corners of an object's footprint rectangle."""
    cx, cz = obj.position[0], obj.position[2]
    hw = obj.size[0] / 2.0
    hd = obj.size[2] / 2.0
    c = math.cos(obj.theta)
    s = math.sin(obj.theta)
    corners = []
    for dx, dz in ((-hw, -hd), (hw, -hd), (hw, hd), (-hw, hd)):
        corners.append((cx + c * dx + s * dz, cz - s * dx + c * dz))
    return np.asarray(corners)


def _topdown_bounds(doc: SceneDocument) -> tuple | None:
    if doc.room is not None and not doc.room.is_empty:
        pts = doc.room.vertices
        xs, zs = pts[:, 0], pts[:, 1]
    elif doc.objects:
        corners = np.concatenate([_footprint_corners(o) for o in doc.objects])
        xs, zs = corners[:, 0], corners[:, 1]
    else:
        return None
    return float(xs.min()), float(xs.max()), float(zs.min()), float(zs.max())


def render_topdown(doc: SceneDocument, resolution: tuple = (512, 512)) -> np.ndarray:
    """Orthographic XZ map: footprints painter-sorted by top height.

    The view fits the room polygon when present, otherwise the object
    bounding box, with a 10% margin. +X right, +Z up.
    """
    img = new_image(resolution)
    bounds = _topdown_bounds(doc)
    if bounds is None:
        return img
    xmin, xmax, zmin, zmax = bounds
    w, h = img.shape[1], img.shape[0]
    cx = 0.5 * (xmin + xmax)
    cz = 0.5 * (zmin + zmax)
    span_x = max(xmax - xmin, 1e-6) * FIT_MARGIN
    span_z = max(zmax - zmin, 1e-6) * FIT_MARGIN
    scale = min(w / span_x, h / span_z)

    def to_px(x: float, z: float) -> tuple:
        return (w / 2.0 + (x - cx) * scale, h / 2.0 - (z - cz) * scale)

    order = sorted(doc.objects, key=lambda o: (o.position[1] + o.size[1] / 2.0, o.object_id))
    for obj in order:
        corners = _footprint_corners(obj)
        pixel_corners = np.asarray([to_px(x, z) for x, z in corners])
        _fill_convex(img, pixel_corners, category_color(obj.category))
    if doc.room is not None and not doc.room.is_empty:
        verts = doc.room.vertices
        for i in range(len(verts)):
            a = to_px(*verts[i])
            b = to_px(*verts[(i + 1) % len(verts)])
            _draw_line(img, a, b, ROOM_OUTLINE)
    return img


# Box corner index = 4*x_half + 2*y_half + z_half; each face is a
# perimeter ring of one fixed axis half.
_BOX_FACES = (
    (0, 1, 3, 2),
    (4, 5, 7, 6),
    (0, 1, 5, 4),
    (2, 3, 7, 6),
    (0, 2, 6, 4),
    (1, 3, 7, 5),
)


def _box_corners(obj) -> np.ndarray:
    half = np.asarray(obj.size, dtype=np.float64) / 2.0
    rot = yaw_matrix(obj.theta)
    center = np.asarray(obj.position, dtype=np.float64)
    corners = np.empty((8, 3))
    i = 0
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                local = half * (sx, sy, sz)
                corners[i] = center + rot @ local
                i += 1
    return corners


def _clip_near(pts_cam: np.ndarray, near: float) -> np.ndarray:
    out = []
    n = len(pts_cam)
    for i in range(n):
        a = pts_cam[i]
        b = pts_cam[(i + 1) % n]
        a_in = a[2] >= near
        b_in = b[2] >= near
        if a_in:
            out.append(a)
        if a_in != b_in:
            t = (near - a[2]) / (b[2] - a[2])
            out.append(a + t * (b - a))
    return np.asarray(out).reshape(-1, 3)


def camera_basis(pose: CameraPose) -> np.ndarray:
    """Camera-to-world rotation; columns are right, up, forward axes.

    Angles reduce mod 2pi first so large inputs stay well conditioned.
    """
    yaw = pose.yaw % (2.0 * math.pi)
    pitch = pose.pitch % (2.0 * math.pi)
    cp, sp = math.cos(pitch), math.sin(pitch)
    tilt = np.array([[1.0, 0.0, 0.0], [0.0, cp, sp], [0.0, -sp, cp]])
    return yaw_matrix(yaw) @ tilt


def render_fpv(doc: SceneDocument, pose: CameraPose) -> np.ndarray:
    """Pinhole projection of every box face, far-to-near painter order.

    Faces are flat-shaded: category color scaled by
    0.35 + 0.65*|normal . view|, filled, then outlined in a darker
    shade so all 12 box edges are visible.
    """
    img = new_image(pose.resolution)
    if not doc.objects:
        return img
    w, h = pose.resolution
    basis = camera_basis(pose)
    eye = np.asarray(pose.eye, dtype=np.float64)
    f_px = (w / 2.0) / math.tan(pose.fov / 2.0)

    faces = []
    for obj in doc.objects:
        corners = _box_corners(obj)
        base = category_color(obj.category)
        for face_idx, quad in enumerate(_BOX_FACES):
            pts = corners[list(quad)]
            centroid = pts.mean(axis=0)
            dist = float(np.linalg.norm(centroid - eye))
            faces.append((-dist, obj.object_id, face_idx, pts, centroid, base))
    faces.sort(key=lambda f: (f[0], f[1], f[2]))

    for _, _, _, pts, centroid, base in faces:
        normal = np.cross(pts[1] - pts[0], pts[2] - pts[0])
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue
        normal /= norm
        view = eye - centroid
        view_norm = np.linalg.norm(view)
        if view_norm < 1e-12:
            continue
        shade = 0.35 + 0.65 * abs(float(normal @ (view / view_norm)))
        color = tuple(min(255, int(round(c * shade))) for c in base)
        edge_color = tuple(int(round(c * 0.5)) for c in color)

        cam = (pts - eye) @ basis
        clipped = _clip_near(cam, NEAR_PLANE)
        if len(clipped) < 3:
            continue
        proj = np.empty((len(clipped), 2))
        proj[:, 0] = w / 2.0 + f_px * clipped[:, 0] / clipped[:, 2]
        proj[:, 1] = h / 2.0 - f_px * clipped[:, 1] / clipped[:, 2]
        _fill_convex(img, proj, color)
        for i in range(len(proj)):
            _draw_line(img, proj[i], proj[(i + 1) % len(proj)], edge_color)
    return img


def write_ppm(img: np.ndarray, path) -> None:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeMismatch("expected an (H, W, 3) image")
    header = f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P6"):
        raise ShapeMismatch(f"not a binary PPM: {path}")
    # Three whitespace-delimited header fields, then exactly one
    # whitespace byte before the payload. split() would eat payload
    # bytes that happen to be whitespace, so walk the header manually.
    pos = 2
    fields = []
    for _ in range(3):
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1
    width, height, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise ShapeMismatch("only maxval 255 PPM supported")
    payload = data[pos : pos + width * height * 3]
    if len(payload) != width * height * 3:
        raise TruncatedPayload(f"PPM payload too short in {path}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()


def write_image(img: np.ndarray, path) -> None:
    """Write PPM (always available) or PNG (needs Pillow)."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        write_ppm(img, path)
        return
    if path.suffix.lower() == ".png":
        try:
            from PIL import Image
        except ImportError as exc:
            raise SceneliftError(
                "PNG output requires Pillow; install the 'png' extra or write .ppm"
            ) from exc
        Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8)).save(path)
        return
    raise SceneliftError(f"unsupported image extension: {path.suffix!r}")
