"""First-person-view evaluation harness.

A virtual camera at the scene center renders a full turn at uniform
yaw steps; each method's views are concatenated left-to-right and the
methods stacked top-to-bottom into one summary image. A structured
prompt asks a multimodal model to rank the methods on three criteria;
replies are parsed into rank matrices and converted to scores where
the best rank 1 maps to the highest score (method_count).
"""

from __future__ import annotations

import json
import math
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MissingMarker, ParseFailure, ShapeMismatch
from .ranking import _ORDINALS, CRITERIA, parse_rankings
from .render import render_fpv
from .scene import CameraPose, SceneDocument


@dataclass(frozen=True, slots=True)
class SweepSpec:
    center: tuple  # (x, y, z) m; eye sits eye_height above this
    n_views: int = 12
    eye_height: float = 1.5
    fov: float = 1.2
    resolution: tuple = (256, 256)

    def __post_init__(self) -> None:
        if len(self.center) != 3:
            raise ShapeMismatch("center must have 3 components")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.n_views < 2:
            raise ValueError("n_views must be >= 2")
        object.__setattr__(self, "resolution", (int(self.resolution[0]), int(self.resolution[1])))


def sweep_poses(spec: SweepSpec) -> list:
    """Poses for a full turn: yaw = 2*pi*k/n, pitch 0, fixed eye."""
    eye = (spec.center[0], spec.center[1] + spec.eye_height, spec.center[2])
    return [
        CameraPose(
            eye=eye,
            yaw=2.0 * math.pi * k / spec.n_views,
            pitch=0.0,
            fov=spec.fov,
            resolution=spec.resolution,
        )
        for k in range(spec.n_views)
    ]


def render_sweep(doc: SceneDocument, spec: SweepSpec) -> list:
    return [render_fpv(doc, pose) for pose in sweep_poses(spec)]


@dataclass(frozen=True, slots=True)
class MethodViews:
    method_name: str
    sweep_images: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "sweep_images", tuple(self.sweep_images))


@dataclass(frozen=True, slots=True)
class EvalBundle:
    description: str
    methods: tuple  # ordered MethodViews

    def __post_init__(self) -> None:
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.methods:
            raise ShapeMismatch("bundle needs at least one method")

    @property
    def method_names(self) -> tuple:
        return tuple(m.method_name for m in self.methods)


def compose_summary(bundle: EvalBundle) -> np.ndarray:
    """One image: views left-to-right per method, methods stacked."""
    counts = {len(m.sweep_images) for m in bundle.methods}
    if len(counts) != 1 or counts == {0}:
        raise ShapeMismatch(f"methods disagree on view count: {sorted(counts)}")
    shapes = {im.shape for m in bundle.methods for im in m.sweep_images}
    if len(shapes) != 1:
        raise ShapeMismatch(f"views disagree on shape: {sorted(shapes)}")
    rows = [np.concatenate(m.sweep_images, axis=1) for m in bundle.methods]
    return np.concatenate(rows, axis=0)


_COUNT_WORDS = {
    2: "two",
    3: "three",
    4: "four",
    5: "five",
    6: "six",
    7: "seven",
    8: "eight",
    9: "nine",
    10: "ten",
}

_FPV_TEMPLATE = """Task: Compare the room layout rationality of {count} methods, all generated from the same text description. From top to bottom, the video sequences display a 360-degree view of each method’s generated scene. Decide which method performs best according to the criteria below.

Text Description: {description}

Instructions:

1. Semantic Correctness
Does the generated layout accurately reflect the text description?
Check whether all described objects are present and correctly represented.

2. Layout Correctness
Is the room design physically plausible and functional?
Evaluate if the layout supports practical use, space efficiency, and proper object functionality. Consider object positions, orientations, and user convenience.

3. Overall Preference
Does the room layout look realistic and natural?
Consider the visual coherence and harmony of the scene.

Evaluation process:
Carefully examine the multi-view images of all {count} 3D scenes. Focus on one criterion at a time and make independent judgments for each.

Output format:
Provide a clear, concise analysis for each criterion. Avoid vague terms like “realistic” or “spacious.” Instead, specify exact issues or strengths. For example:
- For Semantic Correctness, indicate which objects are missing or inaccurately depicted.
- For Layout Correctness, specify which objects are misplaced or poorly oriented, and explain how this impacts usability or functionality.

After the analyses, assign ranks (1–{m}) to each method per criterion (1 = best, {m} = worst).

Summarize your final ranking in the format:
<rank for criterion 1> <rank for criterion 2> <rank for criterion 3>
for each method.

Example:

Analysis:
{example_analysis}

Final answer:
{example_answer}

(where x denotes ranks 1–{m})

(Please strictly follow the format above. Do not include extra symbols like **, quotation marks, or bullet points.)
"""

_TOPDOWN_TEMPLATE = """Task: Compare the room layout rationality of {count} methods, all generated from the same text description. The top-down views of the scenes produced by the {count} methods are presented from left to right. Identify which method performs best based on the criteria below.

Text Description: {description}

Instructions:

1. Semantic Correctness
Does the generated layout accurately reflect the text description?
Check whether all described objects are present and correctly represented.

2. Layout Correctness
Is the room design physically plausible and functional?
Evaluate if the layout supports practical use, space efficiency, and proper object functionality. Consider object positions, orientations, and user convenience.

3. Overall Preference
Does the room layout look realistic and natural?
Consider the visual coherence and harmony of the scene.

Provide only your final ranking of the {count} methods in the format below:

Final answer:
{xs}

(where x denotes ranks from 1 to {m})
"""


def _ordinal(k: int) -> str:
    return _ORDINALS[k] if k < len(_ORDINALS) else f"{k + 1}-th"


def build_fpv_prompt(description: str, method_count: int = 3) -> str:
    """The full-turn comparison prompt with the description filled in."""
    if not description:
        raise ValueError("description must be nonempty")
    ones = "; ".join(f"The {_ordinal(k)} one ..." for k in range(method_count))
    analysis = "\n".join(
        f"{i + 1}. {name}: {ones}"
        for i, name in enumerate(("Semantic Correctness", "Layout Correctness", "Overall Preference"))
    )
    answer = "\n".join(f"The {_ordinal(k)} one: x x x" for k in range(method_count))
    return _FPV_TEMPLATE.format(
        count=_COUNT_WORDS.get(method_count, str(method_count)),
        m=method_count,
        description=description,
        example_analysis=analysis,
        example_answer=answer,
    )


def build_topdown_prompt(description: str, method_count: int = 3) -> str:
    """The final-ranking-only prompt for side-by-side top-down views."""
    if not description:
        raise ValueError("description must be nonempty")
    return _TOPDOWN_TEMPLATE.format(
        count=_COUNT_WORDS.get(method_count, str(method_count)),
        m=method_count,
        description=description,
        xs=" ".join(["x"] * method_count),
    )


def parse_topdown_ranking(reply: str, method_count: int) -> tuple:
    """One line of method_count ranks after the last final-answer marker."""
    matches = list(re.finditer(r"final answer:", reply, re.IGNORECASE))
    if not matches:
        raise MissingMarker("reply contains no 'Final answer:' marker")
    tail = reply[matches[-1].end() :]
    for line in tail.splitlines():
        text = line.replace("*", "").replace('"', "").strip().lstrip("-•–").strip()
        if not text:
            continue
        if ":" in text:
            text = text.rsplit(":", 1)[1]
        tokens = text.split()
        try:
            values = [int(tok) for tok in tokens]
        except ValueError as exc:
            raise ParseFailure(f"cannot parse ranking line: {line!r}") from exc
        if len(values) != method_count:
            raise ParseFailure(f"expected {method_count} ranks, got {len(values)}: {line!r}")
        if any(not 1 <= v <= method_count for v in values):
            raise ParseFailure(f"rank out of range 1..{method_count}: {line!r}")
        return tuple(values)
    raise ParseFailure("final-answer block has no usable line")


@dataclass(slots=True)
class EvalRecord:
    description: str
    reply: str | None = None
    ranks: tuple | None = None
    tie_flags: tuple | None = None
    scores: tuple | None = None
    error: str | None = None


def _evaluate_one(bundle: EvalBundle, client, prompt_kind: str) -> EvalRecord:
    m = len(bundle.methods)
    summary = compose_summary(bundle)
    if prompt_kind == "fpv":
        prompt = build_fpv_prompt(bundle.description, m)
    elif prompt_kind == "topdown":
        prompt = build_topdown_prompt(bundle.description, m)
    else:
        raise ValueError(f"unknown prompt kind {prompt_kind!r}")
    reply = client.send([summary], prompt)
    record = EvalRecord(description=bundle.description, reply=reply)
    try:
        if prompt_kind == "fpv":
            matrix = parse_rankings(reply, m)
            record.ranks = matrix.ranks
            record.tie_flags = matrix.tie_flags
            record.scores = matrix.scores()
        else:
            ranks = parse_topdown_ranking(reply, m)
            record.ranks = tuple((r,) for r in ranks)
            record.tie_flags = (len(set(ranks)) < len(ranks),)
            record.scores = tuple((m + 1 - r,) for r in ranks)
    except (ParseFailure, MissingMarker) as exc:
        record.error = f"{type(exc).__name__}: {exc}"
    return record


def evaluate(bundles: list, client, prompt_kind: str = "fpv") -> dict:
    """Rank every bundle and aggregate mean scores per method.

    Bundles with unparseable replies are excluded from the aggregate
    with a warning; their raw replies stay in the report. The report
    dict is canonical-serialization-ready (no timestamps).
    """
    if not bundles:
        raise ShapeMismatch("no bundles to evaluate")
    names = bundles[0].method_names
    for bundle in bundles[1:]:
        if bundle.method_names != names:
            raise ShapeMismatch("bundles disagree on method names")
    criteria = list(CRITERIA) if prompt_kind == "fpv" else ["overall"]

    concurrency = getattr(getattr(client, "config", None), "concurrency", 1)
    if concurrency > 1 and len(bundles) > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            records = list(pool.map(lambda b: _evaluate_one(b, client, prompt_kind), bundles))
    else:
        records = [_evaluate_one(b, client, prompt_kind) for b in bundles]

    included = [r for r in records if r.error is None]
    for r in records:
        if r.error is not None:
            warnings.warn(f"bundle excluded from aggregate: {r.error}", stacklevel=2)
    aggregate: dict = {}
    for mi, name in enumerate(names):
        aggregate[name] = {}
        for ci, criterion in enumerate(criteria):
            if included:
                mean = sum(r.scores[mi][ci] for r in included) / len(included)
            else:
                mean = None
            aggregate[name][criterion] = mean

    return {
        "schema_version": 1,
        "prompt_kind": prompt_kind,
        "criteria": criteria,
        "methods": list(names),
        "score_convention": "score = method_count + 1 - rank; higher is better",
        "bundles": [
            {
                "description": r.description,
                "reply": r.reply,
                "ranks": None if r.ranks is None else [list(row) for row in r.ranks],
                "tie_flags": None if r.tie_flags is None else list(r.tie_flags),
                "scores": None if r.scores is None else [list(row) for row in r.scores],
                "error": r.error,
            }
            for r in records
        ],
        "aggregate": aggregate,
        "excluded": sum(1 for r in records if r.error is not None),
    }


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
