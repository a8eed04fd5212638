"""Layout refinement: push placed objects apart and into the room.

Minimizes ``L_total = L_p + lambda_o * L_o + lambda_b * L_b`` over the 2D
object positions, where ``L_p`` anchors objects to their detected
positions, ``L_o`` sums pairwise footprint intersection areas, and
``L_b`` sums footprint area outside the room polygon. Gradients come
from central finite differences; descent uses backtracking step halving
so the recorded loss trace is monotone non-increasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geom import Plane, Polygon2D, check_convex, convex_clip, polygon_area


@dataclass(slots=True)
class PlacedObject:
    """A retrieved object reduced to its footprint for refinement."""

    object_id: str
    category: str
    footprint_size: tuple  # (w, d) meters along local x/z
    height_extent: tuple  # (y_min, y_max) meters
    position: np.ndarray  # (x, z), the optimization variable
    original_position: np.ndarray  # detected (x, z)
    resolved_theta: float  # fixed during refinement

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=np.float64).reshape(2).copy()
        self.original_position = (
            np.asarray(self.original_position, dtype=np.float64).reshape(2).copy()
        )
        self.footprint_size = (float(self.footprint_size[0]), float(self.footprint_size[1]))
        self.height_extent = (float(self.height_extent[0]), float(self.height_extent[1]))
        self.resolved_theta = float(self.resolved_theta)

    @property
    def footprint(self) -> Polygon2D:
        return Polygon2D.rectangle(self.position, self.footprint_size, self.resolved_theta)

    def footprint_at(self, position: np.ndarray) -> Polygon2D:
        return Polygon2D.rectangle(position, self.footprint_size, self.resolved_theta)

    @property
    def circumradius(self) -> float:
        return 0.5 * math.hypot(self.footprint_size[0], self.footprint_size[1])

    def copy(self) -> "PlacedObject":
        return PlacedObject(
            object_id=self.object_id,
            category=self.category,
            footprint_size=self.footprint_size,
            height_extent=self.height_extent,
            position=self.position.copy(),
            original_position=self.original_position.copy(),
            resolved_theta=self.resolved_theta,
        )


@dataclass(slots=True)
class SceneLayout:
    """Objects in stable object_id order plus optional convex room."""

    objects: list
    room: Polygon2D | None = None
    ground: Plane = field(default_factory=Plane.horizontal)

    def __post_init__(self) -> None:
        ids = [o.object_id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate object_ids in layout")
        self.objects = sorted(self.objects, key=lambda o: o.object_id)

    def copy(self) -> "SceneLayout":
        return SceneLayout(
            objects=[o.copy() for o in self.objects],
            room=self.room,
            ground=self.ground,
        )


@dataclass(slots=True)
class RefineConfig:
    lambda_o: float = 10.0
    lambda_b: float = 10.0
    eta: float = 0.01
    fd_step: float = 1e-3
    max_iters: int = 2000
    eps_area: float = 1e-6
    stall_window: int = 50
    stall_delta: float = 1e-8
    max_halvings: int = 10

    def __post_init__(self) -> None:
        if self.lambda_o < 0.0 or self.lambda_b < 0.0:
            raise ValueError("loss weights must be non-negative")
        for name in ("eta", "fd_step", "eps_area", "stall_delta"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_iters", "stall_window", "max_halvings"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(slots=True)
class RefineReport:
    iterations: int
    reason: str  # eliminated | stalled | max_iters
    l_p: float
    l_o: float
    l_b: float
    total: float
    max_displacement: float
    loss_trace: list

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "reason": self.reason,
            "l_p": self.l_p,
            "l_o": self.l_o,
            "l_b": self.l_b,
            "total": self.total,
            "max_displacement": self.max_displacement,
            "loss_trace": self.loss_trace,
        }


def _vertical_gap(a: PlacedObject, b: PlacedObject) -> bool:
    return b.height_extent[0] > a.height_extent[1] or a.height_extent[0] > b.height_extent[1]


def _pair_area(
    a: PlacedObject,
    b: PlacedObject,
    fp_a: Polygon2D,
    fp_b: Polygon2D,
) -> float:
    if _vertical_gap(a, b):
        return 0.0
    dx = a.position[0] - b.position[0]
    dz = a.position[1] - b.position[1]
    reach = a.circumradius + b.circumradius
    if dx * dx + dz * dz > reach * reach:
        return 0.0
    return polygon_area(convex_clip(fp_a, fp_b))


def position_loss(layout: SceneLayout) -> float:
    """Sum of squared displacements from the original positions."""
    total = 0.0
    for obj in layout.objects:
        d = obj.position - obj.original_position
        total += float(d @ d)
    return total


def overlap_loss(layout: SceneLayout) -> float:
    """Pairwise footprint intersection area, gated by vertical extent.

    Pairs whose height extents have a strictly positive gap contribute
    nothing: objects hung above one another are not collisions.
    """
    objs = layout.objects
    fps = [o.footprint for o in objs]
    total = 0.0
    for i in range(len(objs)):
        for j in range(i + 1, len(objs)):
            total += _pair_area(objs[i], objs[j], fps[i], fps[j])
    return total


def boundary_loss(layout: SceneLayout) -> float:
    """Footprint area lying outside the room; 0 when no room is given."""
    room = layout.room
    if room is None:
        return 0.0
    check_convex(room)
    total = 0.0
    for obj in layout.objects:
        fp = obj.footprint
        total += polygon_area(fp) - polygon_area(convex_clip(fp, room))
    return total


def total_loss(layout: SceneLayout, cfg: RefineConfig) -> tuple:
    """Weighted total plus the raw components for logging."""
    l_p = position_loss(layout)
    l_o = overlap_loss(layout)
    l_b = boundary_loss(layout)
    value = l_p + cfg.lambda_o * l_o + cfg.lambda_b * l_b
    return value, {"L_p": l_p, "L_o": l_o, "L_b": l_b}


def _object_terms(
    layout: SceneLayout,
    cfg: RefineConfig,
    i: int,
    position: np.ndarray,
    fps: list,
) -> float:
    """Every loss term touched by object ``i`` at a hypothetical position.

    Terms not involving object i are identical on both sides of a central
    difference and cancel exactly, so the gradient only needs these.
    """
    obj = layout.objects[i]
    fp_i = obj.footprint_at(position)
    d = position - obj.original_position
    value = float(d @ d)
    if cfg.lambda_o > 0.0:
        saved = obj.position
        obj.position = position
        try:
            acc = 0.0
            for j, other in enumerate(layout.objects):
                if j == i:
                    continue
                acc += _pair_area(obj, other, fp_i, fps[j])
        finally:
            obj.position = saved
        value += cfg.lambda_o * acc
    if cfg.lambda_b > 0.0 and layout.room is not None:
        out = polygon_area(fp_i) - polygon_area(convex_clip(fp_i, layout.room))
        value += cfg.lambda_b * out
    return value


def loss_gradient(layout: SceneLayout, cfg: RefineConfig) -> np.ndarray:
    """Central finite differences of the total loss over all 2N coordinates.

    Footprints are rebuilt for every perturbation. Terms that do not
    involve the perturbed object cancel between the two sides of the
    difference and are skipped.
    """
    if layout.room is not None:
        check_convex(layout.room)
    objs = layout.objects
    n = len(objs)
    h = cfg.fd_step
    fps = [o.footprint for o in objs]
    grad = np.zeros(2 * n)
    for i in range(n):
        base = objs[i].position
        for c in range(2):
            delta = np.zeros(2)
            delta[c] = h
            plus = _object_terms(layout, cfg, i, base + delta, fps)
            minus = _object_terms(layout, cfg, i, base - delta, fps)
            grad[2 * i + c] = (plus - minus) / (2.0 * h)
    return grad


def refine_layout(layout: SceneLayout, cfg: RefineConfig | None = None) -> tuple:
    """Gradient descent on object positions until violations vanish.

    Terminates when both raw violation components drop to ``eps_area``,
    when the loss stalls over the configured window, or at ``max_iters``.
    A step that fails to decrease the loss is retried with halved step
    sizes; when no halving helps the search is at a fixed point and
    stops as stalled immediately. Deterministic for identical inputs
    and config.
    """
    cfg = cfg or RefineConfig()
    work = layout.copy()
    objs = work.objects
    n = len(objs)

    value, comps = total_loss(work, cfg)
    trace = [value]
    reason = "max_iters"
    iterations = 0
    for it in range(1, cfg.max_iters + 1):
        if comps["L_o"] <= cfg.eps_area and comps["L_b"] <= cfg.eps_area:
            reason = "eliminated"
            break
        grad = loss_gradient(work, cfg)
        positions = np.concatenate([o.position for o in objs]) if n else np.zeros(0)
        step = cfg.eta
        accepted = None
        for _ in range(cfg.max_halvings + 1):
            candidate = positions - step * grad
            for k, obj in enumerate(objs):
                obj.position = candidate[2 * k : 2 * k + 2]
            cand_value, cand_comps = total_loss(work, cfg)
            if cand_value < value:
                accepted = (cand_value, cand_comps)
                break
            step *= 0.5
        if accepted is None:
            # no halving helped; the state is a fixed point of the
            # deterministic search, so further iterations cannot move
            for k, obj in enumerate(objs):
                obj.position = positions[2 * k : 2 * k + 2]
            iterations = it
            trace.append(value)
            reason = "stalled"
            break
        value, comps = accepted
        iterations = it
        trace.append(value)
        if len(trace) > cfg.stall_window:
            if trace[-1 - cfg.stall_window] - trace[-1] < cfg.stall_delta:
                if comps["L_o"] <= cfg.eps_area and comps["L_b"] <= cfg.eps_area:
                    reason = "eliminated"
                else:
                    reason = "stalled"
                break
    else:
        if comps["L_o"] <= cfg.eps_area and comps["L_b"] <= cfg.eps_area:
            reason = "eliminated"

    max_disp = 0.0
    for obj in objs:
        max_disp = max(max_disp, float(np.linalg.norm(obj.position - obj.original_position)))
    report = RefineReport(
        iterations=iterations,
        reason=reason,
        l_p=comps["L_p"],
        l_o=comps["L_o"],
        l_b=comps["L_b"],
        total=value,
        max_displacement=max_disp,
        loss_trace=trace,
    )
    return work, report
