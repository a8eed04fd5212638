"""Seeded synthetic fixtures: framesets, asset catalogs, crowded scenes.

Every generator writes a ground_truth.json beside its output so tests
can check recovered quantities against planted ones. All randomness
flows from one seeded generator consumed in a fixed order, making the
emitted files byte-stable for a given seed and options.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import UnknownKind
from .geom import Polygon2D, convex_clip, polygon_area, yaw_matrix
from .retrieve import AssetCatalog, AssetRecord, save_catalog
from .scene import SceneDocument, SceneObject, save_scene
from .vipt import write_tensor

_DEPTH_QUANTUM = 1.0 / 1024.0  # keeps stored depths exactly representable


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _sample_box_surface(rng: np.random.Generator, size, n: int) -> np.ndarray:
    """Uniform points on the surface of an origin-centered box."""
    w, h, d = (float(v) for v in size)
    areas = np.array([h * d, h * d, w * d, w * d, w * h, w * h])
    cum = np.cumsum(areas / areas.sum())
    face = np.searchsorted(cum, rng.random(n), side="right")
    u = rng.random(n) - 0.5
    v = rng.random(n) - 0.5
    pts = np.empty((n, 3))
    for f, axis, sign in ((0, 0, -1), (1, 0, 1), (2, 1, -1), (3, 1, 1), (4, 2, -1), (5, 2, 1)):
        sel = face == f
        half = (w / 2.0, h / 2.0, d / 2.0)
        pts[sel, axis] = sign * half[axis]
        other = [a for a in range(3) if a != axis]
        spans = {0: w, 1: h, 2: d}
        pts[sel, other[0]] = u[sel] * spans[other[0]]
        pts[sel, other[1]] = v[sel] * spans[other[1]]
    return pts


# --- room frameset -----------------------------------------------------

ROOM_PLAN = (
    ("obj_bed", "bed", (2.0, 0.6, 1.6), (-2.2, -1.2), 0.3),
    ("obj_sofa", "sofa", (1.8, 0.8, 0.9), (1.8, 1.5), 1.1),
    ("obj_table", "table", (1.2, 0.75, 0.8), (0.5, -1.5), 0.7),
    ("obj_wardrobe", "wardrobe", (1.0, 1.9, 0.6), (2.8, -2.0), 0.0),
    ("obj_lamp", "lamp", (0.4, 1.5, 0.4), (-3.0, 2.2), 0.5),
)
ROOM_POLYGON = ((-4.0, -3.0), (4.0, -3.0), (4.0, 3.0), (-4.0, 3.0))
ROOM_DESCRIPTION = "A bedroom with a bed, a sofa, a table, a wardrobe, and a floor lamp."
_CAMERA_EYE = np.array([0.0, 1.6, -7.0])


def _quantize_depth(values: np.ndarray) -> np.ndarray:
    return np.round(values / _DEPTH_QUANTUM) * _DEPTH_QUANTUM


def _box_points_world(rng, size, center_xz, theta, n) -> np.ndarray:
    local = _sample_box_surface(rng, size, n)
    rot = yaw_matrix(theta)
    center = np.array([center_xz[0], size[1] / 2.0, center_xz[1]])
    return local @ rot.T + center


def generate_room_fixture(
    out_dir,
    seed: int = 0,
    scale: float = 2.5,
    outlier_frac: float = 0.0,
    halo_px: int = 0,
) -> Path:
    """Tracked frameset with planted objects and global scale.

    The reconstruction is stored at 1/scale of metric size; monocular
    and reconstructed depth arrays are consistent with that scale so
    the median depth ratio recovers it. With ``halo_px`` > 0 the output
    switches to a single large object whose mask carries a corrupted
    halo ring of that width (its points pushed far behind the box), the
    worst case that adaptive erosion is meant to remove.
    """
    if halo_px > 0:
        return _generate_halo_fixture(out_dir, seed, scale, halo_px)
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)
    rng = np.random.default_rng(seed)
    t_frames, height, width = 10, 64, 64

    strips = {}
    for k, (object_id, *_rest) in enumerate(ROOM_PLAN):
        strips[object_id] = (slice(8, 48), slice(2 + 12 * k, 2 + 12 * k + 12))
    floor_region = (slice(52, 62), slice(2, 62))

    frames_meta = []
    track_masks: dict = {oid: {} for oid, *_ in ROOM_PLAN}
    track_masks["obj_floor"] = {}
    for t in range(t_frames):
        frame_id = f"f{t:03d}"
        point_map = np.zeros((height, width, 3), dtype=np.float64)
        valid = np.zeros((height, width), dtype=np.uint8)

        for object_id, _category, size, center_xz, theta in ROOM_PLAN:
            rows, cols = strips[object_id]
            n = (rows.stop - rows.start) * (cols.stop - cols.start)
            pts = _box_points_world(rng, size, center_xz, theta, n)
            point_map[rows, cols] = pts.reshape(rows.stop - rows.start, -1, 3)
            valid[rows, cols] = 255
            mask = np.zeros((height, width), dtype=np.uint8)
            mask[rows, cols] = 255
            mask_file = f"masks/{object_id}_{frame_id}.vipt"
            write_tensor(out / mask_file, mask)
            track_masks[object_id][frame_id] = mask_file

        rows, cols = floor_region
        n = (rows.stop - rows.start) * (cols.stop - cols.start)
        floor_pts = np.column_stack(
            [
                rng.uniform(-4.0, 4.0, n),
                np.zeros(n),
                rng.uniform(-3.0, 3.0, n),
            ]
        )
        point_map[rows, cols] = floor_pts.reshape(rows.stop - rows.start, -1, 3)
        valid[rows, cols] = 255
        mask = np.zeros((height, width), dtype=np.uint8)
        mask[rows, cols] = 255
        mask_file = f"masks/obj_floor_{frame_id}.vipt"
        write_tensor(out / mask_file, mask)
        track_masks["obj_floor"][frame_id] = mask_file

        metric_range = np.linalg.norm(point_map - _CAMERA_EYE, axis=2)
        recon_depth = _quantize_depth(metric_range / scale)
        recon_depth[recon_depth <= 0] = _DEPTH_QUANTUM
        mono_depth = recon_depth * scale
        if outlier_frac > 0.0:
            flat_valid = np.flatnonzero(valid.ravel())
            n_bad = int(round(outlier_frac * flat_valid.size))
            if n_bad:
                bad = rng.choice(flat_valid, size=n_bad, replace=False)
                factors = rng.uniform(3.0, 10.0, n_bad)
                flat = recon_depth.ravel()
                flat[bad] = flat[bad] * factors
                recon_depth = flat.reshape(recon_depth.shape)

        entry = {
            "frame_id": frame_id,
            "point_map": f"frames/{frame_id}_points.vipt",
            "valid_mask": f"frames/{frame_id}_valid.vipt",
            "mono_depth": f"frames/{frame_id}_mono.vipt",
            "recon_depth": f"frames/{frame_id}_recon.vipt",
        }
        write_tensor(out / entry["point_map"], (point_map / scale).astype("<f4"))
        write_tensor(out / entry["valid_mask"], valid)
        write_tensor(out / entry["mono_depth"], mono_depth.astype("<f4"))
        write_tensor(out / entry["recon_depth"], recon_depth.astype("<f4"))
        frames_meta.append(entry)

    tracks = {
        object_id: {"category": category, "masks": track_masks[object_id]}
        for object_id, category, *_ in ROOM_PLAN
    }
    tracks["obj_floor"] = {"category": "floor", "masks": track_masks["obj_floor"]}
    manifest = {
        "schema_version": 1,
        "units": "meters",
        "fps": 2.0,
        "description": ROOM_DESCRIPTION,
        "room_polygon": [list(v) for v in ROOM_POLYGON],
        "frames": frames_meta,
        "tracks": tracks,
    }
    _write_json(out / "manifest.json", manifest)
    _write_json(
        out / "ground_truth.json",
        {
            "kind": "room",
            "seed": seed,
            "scale": scale,
            "outlier_frac": outlier_frac,
            "camera_eye": list(_CAMERA_EYE),
            "room_polygon": [list(v) for v in ROOM_POLYGON],
            "objects": [
                {
                    "object_id": object_id,
                    "category": category,
                    "size": list(size),
                    "position": [center_xz[0], size[1] / 2.0, center_xz[1]],
                    "theta": theta,
                }
                for object_id, category, size, center_xz, theta in ROOM_PLAN
            ],
            "halo": None,
        },
    )
    return out / "manifest.json"


def _generate_halo_fixture(out_dir, seed: int, scale: float, halo_px: int) -> Path:
    """Single large object whose mask is dilated by a corrupted ring."""
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)
    rng = np.random.default_rng(seed)
    t_frames, height, width = 3, 192, 192
    object_id, category = "obj_0", "cabinet"
    size = (1.5, 1.0, 0.8)
    center_xz = (0.0, 0.0)
    theta = 0.0

    true_mask = np.zeros((height, width), dtype=bool)
    true_mask[21:171, 76:116] = True
    r = int(halo_px)
    yy, xx = np.ogrid[-r : r + 1, -r : r + 1]
    disc = (yy * yy + xx * xx) <= r * r
    observed = ndimage.binary_dilation(true_mask, structure=disc)
    ring = observed & ~true_mask

    frames_meta = []
    masks = {}
    for t in range(t_frames):
        frame_id = f"f{t:03d}"
        point_map = np.zeros((height, width, 3), dtype=np.float64)
        valid = np.zeros((height, width), dtype=np.uint8)

        n_true = int(true_mask.sum())
        pts = _box_points_world(rng, size, center_xz, theta, n_true)
        point_map[true_mask] = pts
        n_ring = int(ring.sum())
        ring_pts = _box_points_world(rng, size, center_xz, theta, n_ring)
        ring_pts[:, 2] += 4.0  # depth-discontinuity points land far behind
        point_map[ring] = ring_pts
        valid[observed] = 255

        metric_range = np.linalg.norm(point_map - _CAMERA_EYE, axis=2)
        recon_depth = _quantize_depth(metric_range / scale)
        recon_depth[recon_depth <= 0] = _DEPTH_QUANTUM
        mono_depth = recon_depth * scale

        mask_file = f"masks/{object_id}_{frame_id}.vipt"
        write_tensor(out / mask_file, observed.astype(np.uint8) * 255)
        masks[frame_id] = mask_file
        entry = {
            "frame_id": frame_id,
            "point_map": f"frames/{frame_id}_points.vipt",
            "valid_mask": f"frames/{frame_id}_valid.vipt",
            "mono_depth": f"frames/{frame_id}_mono.vipt",
            "recon_depth": f"frames/{frame_id}_recon.vipt",
        }
        write_tensor(out / entry["point_map"], (point_map / scale).astype("<f4"))
        write_tensor(out / entry["valid_mask"], valid)
        write_tensor(out / entry["mono_depth"], mono_depth.astype("<f4"))
        write_tensor(out / entry["recon_depth"], recon_depth.astype("<f4"))
        frames_meta.append(entry)

    manifest = {
        "schema_version": 1,
        "units": "meters",
        "fps": 2.0,
        "description": "A storage room with a single cabinet.",
        "frames": frames_meta,
        "tracks": {object_id: {"category": category, "masks": masks}},
    }
    _write_json(out / "manifest.json", manifest)
    _write_json(
        out / "ground_truth.json",
        {
            "kind": "room",
            "seed": seed,
            "scale": scale,
            "outlier_frac": 0.0,
            "camera_eye": list(_CAMERA_EYE),
            "room_polygon": None,
            "objects": [
                {
                    "object_id": object_id,
                    "category": category,
                    "size": list(size),
                    "position": [center_xz[0], size[1] / 2.0, center_xz[1]],
                    "theta": theta,
                }
            ],
            "halo": {
                "object_id": object_id,
                "halo_px": r,
                "true_mask_pixels": int(true_mask.sum()),
                "ring_pixels": int(ring.sum()),
                "ring_offset": [0.0, 0.0, 4.0],
            },
        },
    )
    return out / "manifest.json"


# --- asset catalog ------------------------------------------------------

_CATALOG_POINTS = 3000


def _sample_lshape_surface(rng, arm_a, arm_b, n: int) -> np.ndarray:
    """Two joined boxes forming an L; points inside the union dropped.

    Arm A spans x in [0, La], z in [0, Wa]; arm B continues from A's
    far x end along +z. Both share height h. Output is AABB-centered.
    """
    la, wa, h = arm_a
    lb, wb = arm_b

    def inside_a(p):
        return (0 < p[:, 0]) & (p[:, 0] < la) & (0 < p[:, 2]) & (p[:, 2] < wa)

    def inside_b(p):
        return (
            (la - wb < p[:, 0])
            & (p[:, 0] < la)
            & (wa < p[:, 2])
            & (p[:, 2] < wa + lb)
        )

    area_a = la * wa
    area_b = wb * lb
    n_a = max(1, int(round(n * area_a / (area_a + area_b))))
    n_b = max(1, n - n_a)
    pts_a = _sample_box_surface(rng, (la, h, wa), n_a) + np.array([la / 2.0, h / 2.0, wa / 2.0])
    pts_b = _sample_box_surface(rng, (wb, h, lb), n_b) + np.array(
        [la - wb / 2.0, h / 2.0, wa + lb / 2.0]
    )
    pts_a = pts_a[~inside_b(pts_a)]
    pts_b = pts_b[~inside_a(pts_b)]
    pts = np.concatenate([pts_a, pts_b])
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    return pts - (lo + hi) / 2.0


def _sample_cylinder_surface(rng, radius: float, h: float, n: int) -> np.ndarray:
    lateral = 2.0 * math.pi * radius * h
    caps = 2.0 * math.pi * radius * radius
    n_side = int(round(n * lateral / (lateral + caps)))
    n_caps = n - n_side
    angle = rng.uniform(0.0, 2.0 * math.pi, n_side)
    y = rng.uniform(-h / 2.0, h / 2.0, n_side)
    side = np.column_stack([radius * np.cos(angle), y, radius * np.sin(angle)])
    angle_c = rng.uniform(0.0, 2.0 * math.pi, n_caps)
    rad = radius * np.sqrt(rng.random(n_caps))
    sign = np.where(rng.random(n_caps) < 0.5, -1.0, 1.0)
    cap = np.column_stack([rad * np.cos(angle_c), sign * h / 2.0, rad * np.sin(angle_c)])
    pts = np.concatenate([side, cap])
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    return pts - (lo + hi) / 2.0


def generate_catalog_fixture(out_dir, seed: int = 0, n_assets: int = 20) -> Path:
    """Catalog of boxes, L-shapes, and cylinders with distinct sizes."""
    if n_assets < 3:
        raise ValueError("n_assets must be >= 3")
    rng = np.random.default_rng(seed)
    catalog = AssetCatalog()
    truth = []
    n_box = max(1, int(round(n_assets * 0.4)))
    n_l = max(1, int(round(n_assets * 0.3)))
    box_categories = ("cabinet", "bed", "table", "wardrobe")
    l_categories = ("sectional", "sofa")
    cyl_categories = ("stool", "lamp")
    for i in range(n_assets):
        asset_id = f"asset_{i:03d}"
        if i < n_box:
            family, category = "box", box_categories[i % len(box_categories)]
            size = (
                float(rng.uniform(0.6, 2.0)),
                float(rng.uniform(0.5, 1.8)),
                float(rng.uniform(0.4, 1.2)),
            )
            cloud = _sample_box_surface(rng, size, _CATALOG_POINTS)
            params = {"size": list(size)}
        elif i < n_box + n_l:
            family, category = "lshape", l_categories[(i - n_box) % len(l_categories)]
            arm_a = (
                float(rng.uniform(1.3, 1.9)),
                float(rng.uniform(0.45, 0.65)),
                float(rng.uniform(0.5, 0.9)),
            )
            arm_b = (float(rng.uniform(0.7, 1.1)), float(rng.uniform(0.4, 0.6)))
            cloud = _sample_lshape_surface(rng, arm_a, arm_b, _CATALOG_POINTS)
            params = {"arm_a": list(arm_a), "arm_b": list(arm_b)}
        else:
            family, category = "cylinder", cyl_categories[(i - n_box - n_l) % len(cyl_categories)]
            radius = float(rng.uniform(0.15, 0.45))
            h = float(rng.uniform(0.4, 1.1))
            cloud = _sample_cylinder_surface(rng, radius, h, _CATALOG_POINTS)
            params = {"radius": radius, "height": h}
        record = AssetRecord(
            asset_id=asset_id,
            category=category,
            canonical_size=cloud.max(axis=0) - cloud.min(axis=0),
            sample_cloud=cloud,
        )
        catalog.add(record)
        truth.append(
            {
                "asset_id": asset_id,
                "family": family,
                "category": category,
                "params": params,
                "canonical_size": [float(v) for v in record.canonical_size],
            }
        )
    out = save_catalog(catalog, out_dir)
    _write_json(Path(out_dir) / "ground_truth.json", {"kind": "catalog", "seed": seed, "assets": truth})
    return out


# --- crowded scene for layout refinement --------------------------------

_COLLISION_CATEGORIES = ("sofa", "table", "bed", "cabinet", "desk", "stool")


def generate_collision_scene(out_dir, seed: int = 0, n_objects: int | None = None) -> Path:
    """Scene with overlapping footprints inside a convex room.

    Starts from a collision-free jittered grid (every object strictly
    inside its own cell with clearance), then shifts a random subset of
    objects 0.2-0.8 m along one room axis and resamples until at least
    one overlap or boundary violation exists. Axis-aligned rotations
    and axis-only shifts keep every contact edge-on: the area losses
    are then piecewise linear near zero, which lets plain gradient
    descent remove the violations exactly instead of balancing the
    position anchor against a shrinking corner sliver. Shifted
    wall-adjacent objects also poke outside the room to exercise the
    boundary term.
    """
    rng = np.random.default_rng(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if n_objects is None:
        n_objects = int(rng.integers(8, 15))
    if not 1 <= n_objects <= 20:
        raise ValueError("n_objects must be in 1..20")
    room_w = float(rng.uniform(6.0, 10.0))
    room_d = float(rng.uniform(5.0, 8.0))
    room = [
        [-room_w / 2.0, -room_d / 2.0],
        [room_w / 2.0, -room_d / 2.0],
        [room_w / 2.0, room_d / 2.0],
        [-room_w / 2.0, room_d / 2.0],
    ]
    room_poly = Polygon2D(np.asarray(room))

    cols = max(1, math.ceil(math.sqrt(n_objects * room_w / room_d)))
    rows = max(1, math.ceil(n_objects / cols))
    cell_w, cell_d = room_w / cols, room_d / rows
    # sized so an unshifted object clears even its diagonal neighbors:
    # spans of different rows/columns cannot graze, so every contact
    # comes from a shift and is at least 0.1 m wide
    s_max = min(1.5, min(cell_w, cell_d) - 0.25)

    def _scene_ok(objs) -> bool:
        """At least one violation, none of them a gradient plateau.

        A footprint (nearly) contained in a neighbor or (nearly) fully
        outside the room makes the area loss locally constant, which a
        finite-difference gradient cannot escape; such placements are
        resampled away.
        """
        fps = [
            Polygon2D.rectangle((o.position[0], o.position[2]), (o.size[0], o.size[2]), o.theta)
            for o in objs
        ]
        areas = [polygon_area(fp) for fp in fps]
        violated = False
        for fp, area in zip(fps, areas):
            outside = area - polygon_area(convex_clip(fp, room_poly))
            if outside > 1e-6:
                violated = True
            if outside >= 0.9 * area:
                return False
        for i in range(len(fps)):
            for j in range(i + 1, len(fps)):
                overlap = polygon_area(convex_clip(fps[i], fps[j]))
                if overlap > 1e-6:
                    violated = True
                if overlap >= 0.9 * min(areas[i], areas[j]):
                    return False
        return violated

    objects: list = []
    base_positions: list = []
    for _attempt in range(20):
        sizes = rng.uniform(0.4, max(0.45, s_max), size=(n_objects, 2))
        heights = rng.uniform(0.4, 1.2, n_objects)
        quarters = rng.integers(0, 4, n_objects)
        thetas = quarters * (math.pi / 2.0)
        cells = rng.choice(cols * rows, size=n_objects, replace=False)

        objects = []
        base_positions = []
        for i in range(n_objects):
            w, d = float(sizes[i, 0]), float(sizes[i, 1])
            h = float(heights[i])
            # extents after yawing by a multiple of pi/2
            ext_x, ext_z = (d, w) if quarters[i] % 2 else (w, d)
            cx = -room_w / 2.0 + (cells[i] % cols + 0.5) * cell_w
            cz = -room_d / 2.0 + (cells[i] // cols + 0.5) * cell_d
            # capped jitter keeps grid neighbors nearly aligned, so any
            # collision is a wide edge contact rather than a corner graze
            slack_x = min(0.1, max(0.0, 0.5 * (cell_w - ext_x) - 0.05))
            slack_z = min(0.1, max(0.0, 0.5 * (cell_d - ext_z) - 0.05))
            base = (
                cx + float(rng.uniform(-slack_x, slack_x)),
                cz + float(rng.uniform(-slack_z, slack_z)),
            )
            pos = base
            if rng.uniform() < 0.75:
                shift = float(rng.uniform(0.2, 0.8)) * (1 if rng.uniform() < 0.5 else -1)
                if rng.uniform() < 0.5:
                    pos = (base[0] + shift, base[1])
                else:
                    pos = (base[0], base[1] + shift)
            base_positions.append(base)
            objects.append(
                SceneObject(
                    object_id=f"obj_{i:02d}",
                    category=_COLLISION_CATEGORIES[i % len(_COLLISION_CATEGORIES)],
                    asset_id=None,
                    size=(w, h, d),
                    position=(pos[0], h / 2.0, pos[1]),
                    theta=float(thetas[i]),
                )
            )
        if n_objects == 1 or _scene_ok(objects):
            break
    doc = SceneDocument(
        objects=objects,
        room=room_poly,
        description="A crowded room used to exercise collision removal.",
    )
    save_scene(doc, out / "scene.json")
    _write_json(
        out / "ground_truth.json",
        {
            "kind": "collision-scene",
            "seed": seed,
            "n_objects": n_objects,
            "room": room,
            "objects": [
                {
                    "object_id": o.object_id,
                    "size": list(o.size),
                    "position": list(o.position),
                    "base_position": [b[0], b[1]],
                    "theta": o.theta,
                }
                for o, b in zip(objects, base_positions)
            ],
        },
    )
    return out / "scene.json"


FIXTURE_KINDS = ("room", "catalog", "collision-scene")


def generate_fixture(kind: str, out_dir, seed: int = 0, **options) -> Path:
    """Dispatch by kind; options are generator-specific."""
    if kind == "room":
        return generate_room_fixture(out_dir, seed, **options)
    if kind == "catalog":
        return generate_catalog_fixture(out_dir, seed, **options)
    if kind == "collision-scene":
        return generate_collision_scene(out_dir, seed, **options)
    raise UnknownKind(f"unknown fixture kind {kind!r}; expected one of {FIXTURE_KINDS}")
