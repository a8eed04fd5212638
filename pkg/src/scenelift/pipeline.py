"""End-to-end wiring: frames in, refined scene document out.

Stages run in a fixed order (ingest, rescale, extract, ground, orient,
retrieve, refine, export); the first failure is re-raised tagged with
its stage name. Per-object stages can run on a thread pool; results
are collected in object order so output never depends on scheduling.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import PipelineConfig
from .errors import NoCandidates, NoCategoryMatch, SceneliftError
from .extract import extract_object_cloud
from .geom import Plane, Polygon2D, fit_plane_lsq, gravity_align
from .ingest import estimate_scene_scale, load_frameset, rescale_frameset
from .orient import estimate_orientation, fit_obb
from .refine import PlacedObject, SceneLayout, refine_layout
from .retrieve import filter_candidates, load_catalog, select_asset
from .scene import export_scene, save_scene

GROUND_CATEGORIES = {"floor", "ground"}


class StageFailure(SceneliftError):
    """Wraps the first failing stage's error with the stage name."""

    def __init__(self, stage: str, cause: Exception) -> None:
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def _run_stage(stage: str, emit, fn, *args, **kwargs):
    emit({"event": "stage", "stage": stage, "status": "start"})
    try:
        result = fn(*args, **kwargs)
    except StageFailure:
        raise
    except Exception as exc:
        emit(
            {
                "event": "stage",
                "stage": stage,
                "status": "error",
                "error": f"{type(exc).__name__}: {exc}",
            }
        )
        raise StageFailure(stage, exc) from exc
    emit({"event": "stage", "stage": stage, "status": "done"})
    return result


def _map_objects(fn, items, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def ground_track_ids(frameset) -> list:
    return sorted(
        oid
        for oid, track in frameset.tracks.items()
        if track.category.lower() in GROUND_CATEGORIES
    )


def fit_scene_ground(frameset, instances, cfg: PipelineConfig, emit=None) -> Plane:
    """World-frame ground plane.

    Fits the first floor track and orients the normal so the tracked
    objects sit on the positive side. Falls back to horizontal y=0 when
    the scene has no floor track.
    """
    emit = emit or (lambda event: None)
    ground_ids = ground_track_ids(frameset)
    if ground_ids:
        floor = extract_object_cloud(
            frameset,
            ground_ids[0],
            erosion=cfg.erosion.enabled,
            alpha=cfg.erosion.alpha,
            r_min=cfg.erosion.r_min,
            r_max=cfg.erosion.r_max,
        )
        plane = fit_plane_lsq(floor.cloud)
        above = below = 0
        for inst in instances:
            dist = plane.signed_distance(inst.cloud)
            above += int((dist > 0).sum())
            below += int((dist < 0).sum())
        if below > above:
            plane = plane.flipped()
        return plane
    emit({"event": "ground_default", "reason": "no floor track; assuming y=0"})
    return Plane.horizontal(0.0)


def align_to_ground(ground_world: Plane):
    """Gravity alignment and the ground plane expressed in the new frame."""
    g = gravity_align(ground_world)
    p0 = (ground_world.normal * ground_world.offset).reshape(1, 3)
    return g, Plane.horizontal(float(g.apply(p0)[0, 1]))


def run_pipeline(
    manifest_path,
    catalog_path,
    config: PipelineConfig | None = None,
    out_dir=None,
    log=None,
):
    """Full reconstruction-to-scene run.

    Returns (scene document, refine report, assignments). When out_dir
    is given, scene.json and refine_report.json are written there.
    """
    cfg = config or PipelineConfig()
    emit = log or (lambda event: None)

    frameset = _run_stage("ingest", emit, load_frameset, manifest_path)
    catalog = _run_stage("ingest", emit, load_catalog, catalog_path)

    scale = _run_stage("rescale", emit, estimate_scene_scale, frameset)
    emit({"event": "scene_scale", "scale": scale})
    frameset = _run_stage("rescale", emit, rescale_frameset, frameset, scale)

    ground_ids = ground_track_ids(frameset)
    object_ids = sorted(oid for oid in frameset.tracks if oid not in ground_ids)

    def _extract(oid: str):
        return extract_object_cloud(
            frameset,
            oid,
            erosion=cfg.erosion.enabled,
            alpha=cfg.erosion.alpha,
            r_min=cfg.erosion.r_min,
            r_max=cfg.erosion.r_max,
        )

    instances = _run_stage(
        "extract", emit, _map_objects, _extract, object_ids, cfg.workers
    )

    ground_world = _run_stage("ground", emit, fit_scene_ground, frameset, instances, cfg, emit)
    g, ground = align_to_ground(ground_world)

    def _orient(inst):
        inst.cloud = g.apply(inst.cloud)
        inst.theta = estimate_orientation(inst.cloud, ground)
        inst.obb = fit_obb(inst.cloud, inst.theta, ground, cfg.orient.trim_fraction)
        return inst

    instances = _run_stage(
        "orient", emit, _map_objects, _orient, instances, cfg.workers
    )

    def _retrieve(inst):
        try:
            candidates = filter_candidates(catalog, inst, k=cfg.icp.top_k)
            selection = select_asset(
                inst,
                candidates,
                ground,
                max_iter=cfg.icp.max_iter,
                tol=cfg.icp.tol,
                subsample=cfg.icp.subsample,
                seed=cfg.icp.seed,
            )
        except (NoCategoryMatch, NoCandidates) as exc:
            emit(
                {
                    "event": "unmatched_object",
                    "object_id": inst.object_id,
                    "reason": f"{type(exc).__name__}: {exc}",
                }
            )
            return inst, None
        return inst, selection

    retrieved = _run_stage(
        "retrieve", emit, _map_objects, _retrieve, instances, cfg.workers
    )
    assignments = {inst.object_id: sel for inst, sel in retrieved}

    def _build_layout() -> SceneLayout:
        placed = []
        for inst, sel in retrieved:
            box = inst.obb
            theta = sel.resolved_theta if sel is not None else inst.theta
            placed.append(
                PlacedObject(
                    object_id=inst.object_id,
                    category=inst.category,
                    footprint_size=(float(box.size[0]), float(box.size[2])),
                    height_extent=(box.y_min, box.y_max),
                    position=(float(box.center[0]), float(box.center[2])),
                    original_position=(float(box.center[0]), float(box.center[2])),
                    resolved_theta=float(theta),
                )
            )
        room = None
        if frameset.room_polygon is not None:
            room = Polygon2D(frameset.room_polygon)
        return SceneLayout(objects=placed, room=room, ground=ground)

    layout = _run_stage("refine", emit, _build_layout)
    refined, report = _run_stage("refine", emit, refine_layout, layout, cfg.refine)
    emit(
        {
            "event": "refined",
            "iterations": report.iterations,
            "reason": report.reason,
            "max_displacement": report.max_displacement,
        }
    )

    doc = _run_stage(
        "export", emit, export_scene, refined, assignments, frameset.description
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_scene(doc, out / "scene.json")
        (out / "refine_report.json").write_text(
            json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
    return doc, report, assignments
