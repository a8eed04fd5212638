"""Asset catalog, candidate filtering, and ICP-based asset selection.

Candidates are pre-filtered by category and log-size distance, scaled
anisotropically onto the object's box, then registered with point-to-point
ICP from both yaw hypotheses; the lowest registration RMSE wins.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import MissingFile, NoCandidates, NoCategoryMatch
from .extract import ObjectInstance
from .geom import Plane, RigidTransform, gravity_align
from .orient import OrientedBox, pose_pair
from .vipt import read_tensor, write_tensor

ICP_MAX_ITER = 50
ICP_TOL = 1e-6
ICP_SUBSAMPLE = 2048


@dataclass(frozen=True, slots=True)
class AssetRecord:
    """Catalog entry: canonical-pose sample cloud centered at the origin."""

    asset_id: str
    category: str
    canonical_size: np.ndarray  # AABB extents of sample_cloud, meters
    sample_cloud: np.ndarray  # M x 3

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "canonical_size", np.asarray(self.canonical_size, dtype=np.float64).reshape(3)
        )
        object.__setattr__(
            self, "sample_cloud", np.asarray(self.sample_cloud, dtype=np.float64).reshape(-1, 3)
        )


@dataclass(slots=True)
class AssetCatalog:
    records: dict = field(default_factory=dict)  # asset_id -> AssetRecord
    category_index: dict = field(default_factory=dict)  # lowercase category -> [asset_id]

    def add(self, record: AssetRecord) -> None:
        self.records[record.asset_id] = record
        self.rebuild_index()

    def rebuild_index(self) -> None:
        index: dict = {}
        for asset_id in sorted(self.records):
            cat = self.records[asset_id].category.lower()
            index.setdefault(cat, []).append(asset_id)
        self.category_index = index

    def check_index(self) -> bool:
        current = {k: list(v) for k, v in self.category_index.items()}
        self.rebuild_index()
        rebuilt = self.category_index
        return current == rebuilt


def save_catalog(catalog: AssetCatalog, out_dir) -> Path:
    """Write ``catalog.json`` plus one tensor file per asset."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for asset_id in sorted(catalog.records):
        rec = catalog.records[asset_id]
        points_file = f"{asset_id}.vipt"
        write_tensor(out / points_file, rec.sample_cloud.astype("<f4"))
        entries.append(
            {
                "asset_id": rec.asset_id,
                "category": rec.category,
                "canonical_size": [float(v) for v in rec.canonical_size],
                "points_file": points_file,
            }
        )
    doc = {"schema_version": 1, "assets": entries}
    path = out / "catalog.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_catalog(path) -> AssetCatalog:
    """Load a catalog directory (or its catalog.json path)."""
    p = Path(path)
    if p.is_dir():
        p = p / "catalog.json"
    if not p.exists():
        raise MissingFile(str(p))
    doc = json.loads(p.read_text(encoding="utf-8"))
    catalog = AssetCatalog()
    for entry in doc["assets"]:
        cloud = read_tensor(p.parent / entry["points_file"]).astype(np.float64)
        catalog.records[entry["asset_id"]] = AssetRecord(
            asset_id=entry["asset_id"],
            category=entry["category"],
            canonical_size=np.asarray(entry["canonical_size"], dtype=np.float64),
            sample_cloud=cloud,
        )
    catalog.rebuild_index()
    return catalog


@dataclass(slots=True)
class RegistrationResult:
    """ICP output; ``rmse`` is recomputable from ``transform`` alone."""

    transform: RigidTransform
    rmse: float
    iterations: int
    converged: bool
    rmse_trace: list
    rotation_trace: list


@dataclass(slots=True)
class AssetSelection:
    record: AssetRecord
    transform: RigidTransform  # asset canonical frame -> object world frame
    resolved_theta: float  # yaw in [0, 2*pi) after 0/pi disambiguation
    rmse: float


def filter_candidates(catalog: AssetCatalog, obj: ObjectInstance, k: int = 5) -> list:
    """Top-k same-category assets by ascending log-size distance.

    The score is ``norm(log(canonical_size / object_size))`` element-wise;
    ties break on asset_id so the ranking is deterministic.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if obj.obb is None:
        raise ValueError("object has no fitted box")
    ids = catalog.category_index.get(obj.category.lower(), [])
    if not ids:
        raise NoCategoryMatch(f"no catalog assets for category {obj.category!r}")
    object_size = obj.obb.size
    scored = []
    for asset_id in ids:
        rec = catalog.records[asset_id]
        score = float(np.linalg.norm(np.log(rec.canonical_size / object_size)))
        scored.append((score, asset_id))
    scored.sort()
    return [catalog.records[asset_id] for _, asset_id in scored[:k]]


def normalize_asset(asset: AssetRecord, box: OrientedBox) -> np.ndarray:
    """Scale the sample cloud per axis so its AABB extents equal box.size."""
    factors = box.size / asset.canonical_size
    return asset.sample_cloud * factors


def subsample_cloud(cloud: np.ndarray, max_points: int, seed: int) -> np.ndarray:
    """Uniform seeded subsample preserving point order."""
    n = cloud.shape[0]
    if n <= max_points:
        return cloud
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=max_points, replace=False))
    return cloud[idx]


def _kabsch(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Least-squares rigid motion src -> dst with det(R) = +1 enforced."""
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = float(np.linalg.det(vt.T @ u.T))
    dmat = np.diag([1.0, 1.0, -1.0 if d < 0.0 else 1.0])
    r = vt.T @ dmat @ u.T
    return RigidTransform(r, cd - r @ cs)


def icp_register(
    source: np.ndarray,
    target: np.ndarray,
    init: RigidTransform,
    max_iter: int = ICP_MAX_ITER,
    tol: float = ICP_TOL,
) -> RegistrationResult:
    """Point-to-point ICP aligning ``source`` onto ``target``.

    Each iteration finds nearest neighbors of the transformed source in
    the target, records the RMSE under the current transform, and applies
    the closed-form rigid update. Iteration stops when the RMSE drops to
    ``tol`` or improves by less than ``tol``; the reported RMSE is always
    the nearest-neighbor RMSE under the returned transform.
    """
    if source.shape[0] == 0 or target.shape[0] == 0:
        raise ValueError("clouds must be nonempty")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    tree = cKDTree(target)
    transform = init
    rmse_trace: list = []
    rotation_trace: list = []
    prev = math.inf
    converged = False
    iterations = 0
    rmse = math.inf
    for it in range(1, max_iter + 1):
        iterations = it
        moved = transform.apply(source)
        dist, idx = tree.query(moved)
        rmse = float(np.sqrt(np.mean(dist * dist)))
        rmse_trace.append(rmse)
        rotation_trace.append(transform.rotation.copy())
        if rmse <= tol or (prev - rmse) < tol:
            converged = True
            break
        prev = rmse
        transform = _kabsch(moved, target[idx]).compose(transform)
    if not converged:
        # one extra pass so the reported rmse matches the final transform
        moved = transform.apply(source)
        dist, _ = tree.query(moved)
        rmse = float(np.sqrt(np.mean(dist * dist)))
        rmse_trace.append(rmse)
        rotation_trace.append(transform.rotation.copy())
    return RegistrationResult(
        transform=transform,
        rmse=rmse,
        iterations=iterations,
        converged=converged,
        rmse_trace=rmse_trace,
        rotation_trace=rotation_trace,
    )


def select_asset(
    obj: ObjectInstance,
    candidates: list,
    ground: Plane,
    max_iter: int = ICP_MAX_ITER,
    tol: float = ICP_TOL,
    subsample: int = ICP_SUBSAMPLE,
    seed: int = 0,
) -> AssetSelection:
    """Pick the candidate and yaw hypothesis with the lowest ICP RMSE.

    The object cloud is re-centered on its box center; each scaled
    candidate is registered from both members of the pose pair. Ties break
    on (rmse, asset_id, pose index) so results are deterministic.
    """
    if not candidates:
        raise NoCandidates(f"object {obj.object_id}: empty candidate list")
    if obj.obb is None:
        raise ValueError("object has no fitted box")
    g = gravity_align(ground)
    center_aligned = g.apply(obj.obb.center[np.newaxis, :])[0]
    target = g.apply(obj.cloud) - center_aligned
    target = subsample_cloud(target, subsample, seed)
    theta = obj.obb.theta
    box_at_origin = OrientedBox(center=np.zeros(3), size=obj.obb.size, theta=theta)
    inits = pose_pair(box_at_origin)
    best_key = None
    best = None
    for cand in candidates:
        source = subsample_cloud(normalize_asset(cand, obj.obb), subsample, seed)
        for pose_idx, init in enumerate((inits.primary, inits.flipped)):
            result = icp_register(source, target, init, max_iter, tol)
            key = (result.rmse, cand.asset_id, pose_idx)
            if best_key is None or key < best_key:
                best_key = key
                best = (cand, result, pose_idx)
    record, result, pose_idx = best
    recenter = RigidTransform(np.eye(3), center_aligned)
    world_transform = g.inverse().compose(recenter.compose(result.transform))
    resolved = (theta + math.pi * pose_idx) % (2.0 * math.pi)
    return AssetSelection(
        record=record,
        transform=world_transform,
        resolved_theta=resolved,
        rmse=result.rmse,
    )
