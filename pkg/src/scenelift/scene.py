"""Final scene model: JSON document, camera poses, canonical export.

A scene is a flat list of boxes: category, size [w, h, d], position
[x, y, z], yaw theta, plus an optional room polygon in the ground
plane. Serialization is canonical (sorted keys, two-space indent,
trailing newline, shortest round-trip floats) so identical scenes
produce byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch
from .geom import Plane, Polygon2D
from .refine import PlacedObject, SceneLayout

SCHEMA_VERSION = 1


@dataclass(frozen=True, slots=True)
class SceneObject:
    object_id: str
    category: str
    asset_id: str | None
    size: tuple  # (w, h, d) meters
    position: tuple  # (x, y, z) meters
    theta: float  # yaw, radians

    def __post_init__(self) -> None:
        if len(self.size) != 3 or len(self.position) != 3:
            raise ShapeMismatch("size and position must have 3 components")
        object.__setattr__(self, "size", tuple(float(v) for v in self.size))
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "theta", float(self.theta))


@dataclass(slots=True)
class SceneDocument:
    objects: list = field(default_factory=list)
    room: Polygon2D | None = None
    description: str = ""
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        self.objects = sorted(self.objects, key=lambda o: o.object_id)

    def to_dict(self) -> dict:
        doc = {
            "schema_version": self.schema_version,
            "description": self.description,
            "room": None
            if self.room is None
            else [[float(x), float(z)] for x, z in self.room.vertices],
            "objects": [
                {
                    "object_id": o.object_id,
                    "category": o.category,
                    "asset_id": o.asset_id,
                    "size": list(o.size),
                    "position": list(o.position),
                    "theta": o.theta,
                }
                for o in self.objects
            ],
        }
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "SceneDocument":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ShapeMismatch(f"unsupported scene schema_version {doc.get('schema_version')!r}")
        room = doc.get("room")
        polygon = None if room is None else Polygon2D(np.asarray(room, dtype=np.float64))
        objects = [
            SceneObject(
                object_id=entry["object_id"],
                category=entry["category"],
                asset_id=entry.get("asset_id"),
                size=tuple(entry["size"]),
                position=tuple(entry["position"]),
                theta=entry["theta"],
            )
            for entry in doc.get("objects", [])
        ]
        return cls(
            objects=objects,
            room=polygon,
            description=doc.get("description", ""),
        )

    @classmethod
    def loads(cls, text: str) -> "SceneDocument":
        return cls.from_dict(json.loads(text))


def save_scene(doc: SceneDocument, path) -> None:
    Path(path).write_text(doc.dumps(), encoding="utf-8")


def load_scene(path) -> SceneDocument:
    return SceneDocument.loads(Path(path).read_text(encoding="utf-8"))


MOUNT_THRESHOLD = 0.5  # m above floor before an object stops resting on it


def export_scene(layout, assignments: dict, description: str = "") -> SceneDocument:
    """Build the final document from a refined layout and asset picks.

    ``assignments`` maps object_id to an asset selection (or None for
    unmatched objects). Objects rest on the ground plane: exported y is
    floor + h/2, except when the measured extent starts more than
    MOUNT_THRESHOLD above the floor, which indicates a mounted object
    whose measured height is kept.
    """
    floor_y = float(layout.ground.offset)
    objects = []
    for obj in layout.objects:
        y_min, y_max = obj.height_extent
        h = y_max - y_min
        if y_min > floor_y + MOUNT_THRESHOLD:
            y = 0.5 * (y_min + y_max)
        else:
            y = floor_y + 0.5 * h
        selection = assignments.get(obj.object_id)
        asset_id = None if selection is None else selection.record.asset_id
        theta = obj.resolved_theta if selection is None else selection.resolved_theta
        objects.append(
            SceneObject(
                object_id=obj.object_id,
                category=obj.category,
                asset_id=asset_id,
                size=(obj.footprint_size[0], h, obj.footprint_size[1]),
                position=(float(obj.position[0]), y, float(obj.position[1])),
                theta=float(theta) % (2.0 * math.pi),
            )
        )
    return SceneDocument(objects=objects, room=layout.room, description=description)


def layout_from_scene(doc: SceneDocument, ground: Plane | None = None) -> SceneLayout:
    """Rebuild an editable layout from an exported document."""
    if ground is None:
        ground = Plane.horizontal(0.0)
    objects = []
    for obj in doc.objects:
        w, h, d = obj.size
        x, y, z = obj.position
        objects.append(
            PlacedObject(
                object_id=obj.object_id,
                category=obj.category,
                footprint_size=(w, d),
                height_extent=(y - 0.5 * h, y + 0.5 * h),
                position=(x, z),
                original_position=(x, z),
                resolved_theta=obj.theta,
            )
        )
    return SceneLayout(objects=objects, room=doc.room, ground=ground)


@dataclass(frozen=True, slots=True)
class CameraPose:
    eye: tuple  # (x, y, z) meters
    yaw: float  # radians, 0 looks along +Z
    pitch: float  # radians, positive looks up
    fov: float  # horizontal field of view, radians
    resolution: tuple = (256, 256)  # (W, H) pixels

    def __post_init__(self) -> None:
        if len(self.eye) != 3:
            raise ShapeMismatch("eye must have 3 components")
        object.__setattr__(self, "eye", tuple(float(v) for v in self.eye))
        object.__setattr__(self, "yaw", float(self.yaw))
        object.__setattr__(self, "pitch", float(self.pitch))
        object.__setattr__(self, "fov", float(self.fov))
        if not 0.0 < self.fov < math.pi:
            raise ValueError("fov must lie in (0, pi)")
        w, h = self.resolution
        if int(w) < 1 or int(h) < 1:
            raise ValueError("resolution must be positive")
        object.__setattr__(self, "resolution", (int(w), int(h)))
