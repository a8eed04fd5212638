"""Frameset loading and metric rescaling.

A manifest is a JSON file describing T frames of a tracked multi-view
reconstruction plus per-object mask tracks. Tensor payloads live in
sibling files (see :mod:`scenelift.vipt`). All paths in the manifest are
resolved relative to the manifest's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DanglingTrackRef,
    MissingFile,
    NonPositiveScale,
    NoValidPixels,
    ShapeMismatch,
)
from .vipt import read_tensor

# Reconstructed depths at or below this are excluded from scale ratios.
EPS_DEPTH = 1e-4


@dataclass(slots=True)
class Frame:
    frame_id: str
    point_map: np.ndarray  # H x W x 3 f32, reconstructor world frame
    valid_mask: np.ndarray  # H x W u8, 0 or 255
    mono_depth: np.ndarray  # H x W f32, metric
    recon_depth: np.ndarray  # H x W f32, reconstructor units


@dataclass(slots=True)
class Track:
    object_id: str
    category: str
    masks: dict  # frame_id -> H x W u8 mask array


@dataclass(slots=True)
class FrameSet:
    frames: list
    tracks: dict  # object_id -> Track
    fps: float = 2.0
    room_polygon: np.ndarray | None = None  # M x 2 (x, z) meters
    description: str = ""

    @property
    def frame_ids(self) -> list:
        return [f.frame_id for f in self.frames]

    def frame(self, frame_id: str) -> Frame:
        for f in self.frames:
            if f.frame_id == frame_id:
                return f
        raise KeyError(frame_id)


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingFile(str(path))
    return path


def load_frameset(manifest_path) -> FrameSet:
    """Load and validate a manifest plus every tensor it references."""
    manifest_path = Path(manifest_path)
    _require(manifest_path)
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    if doc.get("schema_version") != 1:
        raise ShapeMismatch(f"unsupported manifest schema_version {doc.get('schema_version')!r}")
    base = manifest_path.parent

    frames = []
    shape_hw = None
    for entry in doc["frames"]:
        fid = str(entry["frame_id"])
        point_map = read_tensor(_require(base / entry["point_map"]))
        valid_mask = read_tensor(_require(base / entry["valid_mask"]))
        mono_depth = read_tensor(_require(base / entry["mono_depth"]))
        recon_depth = read_tensor(_require(base / entry["recon_depth"]))
        if point_map.ndim != 3 or point_map.shape[2] != 3:
            raise ShapeMismatch(f"frame {fid}: point_map must be HxWx3")
        hw = point_map.shape[:2]
        for name, arr in (
            ("valid_mask", valid_mask),
            ("mono_depth", mono_depth),
            ("recon_depth", recon_depth),
        ):
            if arr.shape != hw:
                raise ShapeMismatch(f"frame {fid}: {name} shape {arr.shape} != {hw}")
        if shape_hw is None:
            shape_hw = hw
        elif hw != shape_hw:
            raise ShapeMismatch(f"frame {fid}: shape {hw} differs from {shape_hw}")
        frames.append(
            Frame(
                frame_id=fid,
                point_map=point_map.astype(np.float64),
                valid_mask=valid_mask,
                mono_depth=mono_depth.astype(np.float64),
                recon_depth=recon_depth.astype(np.float64),
            )
        )
    if not frames:
        raise ShapeMismatch("manifest has no frames")

    known_ids = {f.frame_id for f in frames}
    tracks: dict = {}
    for object_id, spec in doc["tracks"].items():
        masks = {}
        for frame_id, rel in spec["masks"].items():
            if frame_id not in known_ids:
                raise DanglingTrackRef(
                    f"track {object_id} references unknown frame {frame_id}"
                )
            mask_path = base / rel
            if not mask_path.exists():
                raise DanglingTrackRef(f"track {object_id}: missing mask {rel}")
            mask = read_tensor(mask_path)
            if mask.shape != shape_hw:
                raise ShapeMismatch(
                    f"track {object_id} frame {frame_id}: mask shape {mask.shape}"
                )
            masks[frame_id] = mask
        tracks[object_id] = Track(
            object_id=object_id, category=str(spec["category"]), masks=masks
        )

    room = doc.get("room_polygon")
    room_arr = None
    if room is not None:
        room_arr = np.asarray(room, dtype=np.float64).reshape(-1, 2)
    return FrameSet(
        frames=frames,
        tracks=tracks,
        fps=float(doc.get("fps", 2.0)),
        room_polygon=room_arr,
        description=str(doc.get("description", "")),
    )


def estimate_scene_scale(frameset: FrameSet) -> float:
    """Global metric scale: median of mono/recon depth ratios.

    Pixels with ``valid_mask == 0`` or ``recon_depth <= EPS_DEPTH`` are
    excluded; the median runs over the pooled pixel set of all frames.
    """
    ratios = []
    for f in frameset.frames:
        keep = (f.valid_mask != 0) & (f.recon_depth > EPS_DEPTH)
        if np.any(keep):
            ratios.append(f.mono_depth[keep] / f.recon_depth[keep])
    if not ratios:
        raise NoValidPixels("no pixel passed the validity gates")
    pooled = np.concatenate(ratios)
    return float(np.median(pooled))


def rescale_frameset(frameset: FrameSet, scale: float) -> FrameSet:
    """Multiply point maps and reconstructed depths by ``scale``."""
    if not scale > 0.0:
        raise NonPositiveScale(f"scale must be positive, got {scale}")
    frames = [
        Frame(
            frame_id=f.frame_id,
            point_map=f.point_map * scale,
            valid_mask=f.valid_mask,
            mono_depth=f.mono_depth,
            recon_depth=f.recon_depth * scale,
        )
        for f in frameset.frames
    ]
    return FrameSet(
        frames=frames,
        tracks=frameset.tracks,
        fps=frameset.fps,
        room_polygon=frameset.room_polygon,
        description=frameset.description,
    )
