"""Command-line frontend.

One binary, one subcommand per stage plus the full run, the renderers,
the evaluation harness, rank correlation, and fixture generation. Stage
outputs are files so stages compose through the filesystem. Logs are
line-delimited JSON on stderr; exit codes: 0 success, 2 usage error,
3 input error, 4 stage failure, 5 evaluation parse failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import (
    BadMagic,
    DanglingTrackRef,
    LengthMismatch,
    MissingFile,
    MissingMarker,
    ParseFailure,
    SceneliftError,
    ShapeMismatch,
    TruncatedPayload,
    UnknownKind,
    UnsupportedDtype,
)
from .extract import extract_object_cloud
from .fixtures import generate_fixture
from .fpv import EvalBundle, MethodViews, SweepSpec, evaluate, render_sweep, write_report
from .ingest import estimate_scene_scale, load_frameset, rescale_frameset
from .mllm import HttpTransport, MllmClient, ReplayTransport
from .orient import estimate_orientation, fit_obb
from .pipeline import StageFailure, align_to_ground, fit_scene_ground, run_pipeline
from .ranking import align_ratings, kendall_tau, read_ratings_csv
from .refine import refine_layout
from .render import render_fpv, render_topdown, write_image
from .retrieve import filter_candidates, load_catalog, select_asset
from .scene import (
    CameraPose,
    SceneDocument,
    SceneObject,
    layout_from_scene,
    load_scene,
    save_scene,
)
from .vipt import write_tensor

_INPUT_ERRORS = (
    MissingFile,
    BadMagic,
    TruncatedPayload,
    UnsupportedDtype,
    ShapeMismatch,
    DanglingTrackRef,
    UnknownKind,
    LengthMismatch,
)


def log_event(event: dict) -> None:
    sys.stderr.write(json.dumps(event, sort_keys=True) + "\n")


def _ensure_out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _load_rescaled(manifest_path):
    frameset = load_frameset(manifest_path)
    scale = estimate_scene_scale(frameset)
    log_event({"event": "scene_scale", "scale": scale})
    return rescale_frameset(frameset, scale), scale


def _extract_instance(frameset, object_id: str, cfg, erosion: bool):
    return extract_object_cloud(
        frameset,
        object_id,
        erosion=erosion,
        alpha=cfg.erosion.alpha,
        r_min=cfg.erosion.r_min,
        r_max=cfg.erosion.r_max,
    )


def _oriented_instance(manifest_path, object_id: str, cfg):
    """Shared front half of orient/retrieve: extract, ground, align, OBB."""
    frameset, _ = _load_rescaled(manifest_path)
    inst = _extract_instance(frameset, object_id, cfg, cfg.erosion.enabled)
    ground_world = fit_scene_ground(frameset, [inst], cfg, log_event)
    g, ground = align_to_ground(ground_world)
    inst.cloud = g.apply(inst.cloud)
    inst.theta = estimate_orientation(inst.cloud, ground)
    inst.obb = fit_obb(inst.cloud, inst.theta, ground, cfg.orient.trim_fraction)
    return inst, ground


def _scene_center(doc: SceneDocument) -> tuple:
    if doc.room is not None:
        v = doc.room.vertices
        return (float(v[:, 0].mean()), 0.0, float(v[:, 1].mean()))
    if doc.objects:
        xs = [o.position[0] for o in doc.objects]
        zs = [o.position[2] for o in doc.objects]
        return (sum(xs) / len(xs), 0.0, sum(zs) / len(zs))
    return (0.0, 0.0, 0.0)


def _cmd_ingest(args, cfg) -> int:
    frameset = load_frameset(args.manifest)
    scale = estimate_scene_scale(frameset)
    log_event({"event": "scene_scale", "scale": scale})
    out = _ensure_out(args)
    _write_json(
        out / "scale.json",
        {
            "scale": scale,
            "frames": len(frameset.frames),
            "tracks": sorted(frameset.tracks),
        },
    )
    print(out / "scale.json")
    return 0


def _cmd_extract(args, cfg) -> int:
    frameset, _ = _load_rescaled(args.manifest)
    erosion = cfg.erosion.enabled and not args.no_erosion
    inst = _extract_instance(frameset, args.object_id, cfg, erosion)
    out = _ensure_out(args)
    path = out / f"{args.object_id}_cloud.vipt"
    write_tensor(path, inst.cloud.astype(np.float32))
    log_event(
        {
            "event": "extracted",
            "object_id": args.object_id,
            "category": inst.category,
            "points": int(len(inst.cloud)),
            "erosion": erosion,
        }
    )
    print(path)
    return 0


def _cmd_orient(args, cfg) -> int:
    inst, _ = _oriented_instance(args.manifest, args.object_id, cfg)
    box = inst.obb
    out = _ensure_out(args)
    path = out / f"{args.object_id}_obb.json"
    _write_json(
        path,
        {
            "object_id": args.object_id,
            "category": inst.category,
            "theta": float(inst.theta),
            "center": [float(v) for v in box.center],
            "size": [float(v) for v in box.size],
        },
    )
    print(path)
    return 0


def _cmd_retrieve(args, cfg) -> int:
    inst, ground = _oriented_instance(args.manifest, args.object_id, cfg)
    catalog = load_catalog(args.catalog)
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
    out = _ensure_out(args)
    path = out / f"{args.object_id}_asset.json"
    _write_json(
        path,
        {
            "object_id": args.object_id,
            "asset_id": selection.record.asset_id,
            "resolved_theta": float(selection.resolved_theta),
            "rmse": float(selection.rmse),
            "rotation": [[float(v) for v in row] for row in selection.transform.rotation],
            "translation": [float(v) for v in selection.transform.translation],
        },
    )
    print(path)
    return 0


def _cmd_refine(args, cfg) -> int:
    doc = load_scene(args.scene)
    layout = layout_from_scene(doc)
    refined, report = refine_layout(layout, cfg.refine)
    log_event(
        {
            "event": "refined",
            "iterations": report.iterations,
            "reason": report.reason,
            "max_displacement": report.max_displacement,
        }
    )
    moved = {o.object_id: o.position for o in refined.objects}
    objects = [
        SceneObject(
            object_id=o.object_id,
            category=o.category,
            asset_id=o.asset_id,
            size=o.size,
            position=(
                float(moved[o.object_id][0]),
                o.position[1],
                float(moved[o.object_id][1]),
            ),
            theta=o.theta,
        )
        for o in doc.objects
    ]
    out = _ensure_out(args)
    path = out / "refined_scene.json"
    save_scene(SceneDocument(objects=objects, room=doc.room, description=doc.description), path)
    _write_json(out / "refine_report.json", report.to_dict())
    print(path)
    return 0


def _cmd_run(args, cfg) -> int:
    out = _ensure_out(args)
    run_pipeline(args.manifest, args.catalog, config=cfg, out_dir=out, log=log_event)
    print(out / "scene.json")
    return 0


def _cmd_render(args, cfg) -> int:
    doc = load_scene(args.scene)
    out = _ensure_out(args)
    fov = args.fov if args.fov is not None else cfg.sweep.fov
    written = []
    if args.mode == "topdown":
        resolution = tuple(args.resolution or cfg.render.topdown_resolution)
        img = render_topdown(doc, resolution)
        path = out / f"topdown.{args.format}"
        write_image(img, path)
        written.append(path)
    elif args.mode == "fpv":
        center = _scene_center(doc)
        eye = args.eye or (center[0], center[1] + cfg.sweep.eye_height, center[2])
        pose = CameraPose(
            eye=eye,
            yaw=args.yaw,
            pitch=args.pitch,
            fov=fov,
            resolution=tuple(args.resolution or cfg.sweep.resolution),
        )
        img = render_fpv(doc, pose)
        path = out / f"fpv.{args.format}"
        write_image(img, path)
        written.append(path)
    else:
        spec = SweepSpec(
            center=tuple(args.center) if args.center else _scene_center(doc),
            n_views=cfg.sweep.n_views,
            eye_height=cfg.sweep.eye_height,
            fov=fov,
            resolution=tuple(args.resolution or cfg.sweep.resolution),
        )
        for k, img in enumerate(render_sweep(doc, spec)):
            path = out / f"sweep_{k:02d}.{args.format}"
            write_image(img, path)
            written.append(path)
    log_event({"event": "rendered", "mode": args.mode, "files": len(written)})
    for path in written:
        print(path)
    return 0


def _load_bundles(path: Path, cfg) -> list:
    raw = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(raw, list) or not raw:
        raise ShapeMismatch("bundles file must be a non-empty JSON array")
    base = path.parent
    bundles = []
    for entry in raw:
        methods = []
        for m in entry["methods"]:
            scene_path = Path(m["scene"])
            if not scene_path.is_absolute():
                scene_path = base / scene_path
            doc = load_scene(scene_path)
            spec = SweepSpec(
                center=_scene_center(doc),
                n_views=cfg.sweep.n_views,
                eye_height=cfg.sweep.eye_height,
                fov=cfg.sweep.fov,
                resolution=cfg.sweep.resolution,
            )
            methods.append(MethodViews(method_name=m["name"], sweep_images=render_sweep(doc, spec)))
        bundles.append(EvalBundle(description=entry["description"], methods=methods))
    return bundles


def _cmd_evaluate(args, cfg) -> int:
    bundles = _load_bundles(Path(args.bundles), cfg)
    if args.replay:
        transport = ReplayTransport(args.replay)
    else:
        transport = HttpTransport(cfg.mllm)
    client = MllmClient(transport, cfg.mllm)
    report = evaluate(bundles, client, prompt_kind=args.prompt_kind)
    out = _ensure_out(args)
    path = out / "eval_report.json"
    write_report(report, path)
    log_event(
        {
            "event": "evaluated",
            "bundles": len(bundles),
            "excluded": report["excluded"],
        }
    )
    print(path)
    if report["excluded"] == len(bundles):
        return 5
    return 0


def _tau_or_none(list_a, list_b, variant: str):
    tau = kendall_tau(list_a, list_b, variant=variant)
    return None if math.isnan(tau) else tau


def _cmd_tau(args, cfg) -> int:
    variant = args.variant or cfg.tau_variant
    ratings_a = read_ratings_csv(args.ratings_a)
    ratings_b = read_ratings_csv(args.ratings_b)
    list_a, list_b, keys = align_ratings(ratings_a, ratings_b)
    per_criterion = {}
    for criterion in sorted({k[2] for k in keys}):
        idx = [i for i, k in enumerate(keys) if k[2] == criterion]
        per_criterion[criterion] = _tau_or_none(
            [list_a[i] for i in idx], [list_b[i] for i in idx], variant
        )
    payload = {
        "variant": variant,
        "pairs": len(keys),
        "overall": _tau_or_none(list_a, list_b, variant),
        "per_criterion": per_criterion,
    }
    out = _ensure_out(args)
    _write_json(out / "tau.json", payload)
    print(json.dumps(payload, sort_keys=True))
    return 0


def _cmd_gen_fixture(args, cfg) -> int:
    options = {}
    if args.kind == "room":
        if args.scale is not None:
            options["scale"] = args.scale
        if args.outlier_frac is not None:
            options["outlier_frac"] = args.outlier_frac
        if args.halo_px is not None:
            options["halo_px"] = args.halo_px
    elif args.kind == "catalog":
        if args.n_assets is not None:
            options["n_assets"] = args.n_assets
    elif args.kind == "collision-scene":
        if args.n_objects is not None:
            options["n_objects"] = args.n_objects
    out = _ensure_out(args)
    path = generate_fixture(args.kind, out, seed=args.seed, **options)
    log_event({"event": "fixture", "kind": args.kind, "path": str(path)})
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="TOML config file")
    common.add_argument("--out-dir", default=".", help="directory for output files")

    parser = argparse.ArgumentParser(
        prog="scenelift",
        description="Lift tracked multi-view point maps into an asset-backed 3D scene layout.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="validate a manifest and report the metric scale")
    p.add_argument("manifest")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("extract", parents=[common], help="extract one object's point cloud")
    p.add_argument("manifest")
    p.add_argument("--object-id", required=True)
    p.add_argument("--no-erosion", action="store_true", help="skip mask erosion")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("orient", parents=[common], help="estimate one object's yaw and bounding box")
    p.add_argument("manifest")
    p.add_argument("--object-id", required=True)
    p.set_defaults(func=_cmd_orient)

    p = sub.add_parser("retrieve", parents=[common], help="pick the best catalog asset for one object")
    p.add_argument("manifest")
    p.add_argument("catalog")
    p.add_argument("--object-id", required=True)
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("refine", parents=[common], help="resolve collisions in an exported scene")
    p.add_argument("scene")
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("run", parents=[common], help="full pipeline: manifest + catalog to scene.json")
    p.add_argument("manifest")
    p.add_argument("catalog")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("render", parents=[common], help="render a scene document")
    p.add_argument("scene")
    p.add_argument("--mode", choices=("topdown", "fpv", "sweep"), default="topdown")
    p.add_argument("--resolution", nargs=2, type=int, metavar=("W", "H"))
    p.add_argument("--eye", nargs=3, type=float, metavar=("X", "Y", "Z"))
    p.add_argument("--yaw", type=float, default=0.0)
    p.add_argument("--pitch", type=float, default=0.0)
    p.add_argument("--fov", type=float, default=None)
    p.add_argument("--center", nargs=3, type=float, metavar=("X", "Y", "Z"), help="sweep orbit center")
    p.add_argument("--format", choices=("ppm", "png"), default="ppm")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("evaluate", parents=[common], help="rank methods with an MLLM judge")
    p.add_argument("bundles", help="JSON array of {description, methods: [{name, scene}]}")
    p.add_argument("--replay", default=None, help="JSON file of canned replies instead of a live endpoint")
    p.add_argument("--prompt-kind", choices=("fpv", "topdown"), default="fpv")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("tau", parents=[common], help="Kendall rank correlation between two ratings files")
    p.add_argument("ratings_a")
    p.add_argument("ratings_b")
    p.add_argument("--variant", choices=("a", "b"), default=None)
    p.set_defaults(func=_cmd_tau)

    p = sub.add_parser("gen-fixture", parents=[common], help="write a synthetic test fixture")
    p.add_argument("kind")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=None)
    p.add_argument("--outlier-frac", type=float, default=None)
    p.add_argument("--halo-px", type=int, default=None)
    p.add_argument("--n-assets", type=int, default=None)
    p.add_argument("--n-objects", type=int, default=None)
    p.set_defaults(func=_cmd_gen_fixture)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
    except (ValueError, OSError) as exc:
        log_event({"event": "error", "error": f"{type(exc).__name__}: {exc}"})
        return 3
    try:
        return args.func(args, cfg)
    except StageFailure as exc:
        log_event({"event": "error", "stage": exc.stage, "error": str(exc)})
        return 4
    except (ParseFailure, MissingMarker) as exc:
        log_event({"event": "error", "error": f"{type(exc).__name__}: {exc}"})
        return 5 if args.command == "evaluate" else 3
    except _INPUT_ERRORS as exc:
        log_event({"event": "error", "error": f"{type(exc).__name__}: {exc}"})
        return 3
    except (ValueError, OSError, KeyError) as exc:
        log_event({"event": "error", "error": f"{type(exc).__name__}: {exc}"})
        return 3
    except SceneliftError as exc:
        log_event({"event": "error", "error": f"{type(exc).__name__}: {exc}"})
        return 4


if __name__ == "__main__":
    sys.exit(main())
