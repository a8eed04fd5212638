"""scenelift: tracked multi-view point maps to an asset-backed 3D scene.

The pipeline rescales a reconstruction to metric units, extracts
per-object point clouds with adaptive mask erosion, fits gravity-aligned
oriented boxes, retrieves matching catalog assets with ICP, resolves
collisions by gradient descent on a layout loss, and exports a scene
document. A deterministic box rasterizer plus an MLLM ranking harness
close the loop for first-person-view evaluation.
"""

from .config import PipelineConfig, load_config
from .errors import SceneliftError
from .fixtures import generate_fixture
from .fpv import (
    EvalBundle,
    MethodViews,
    SweepSpec,
    build_fpv_prompt,
    build_topdown_prompt,
    evaluate,
)
from .pipeline import StageFailure, run_pipeline
from .ranking import kendall_tau, parse_rankings
from .refine import RefineConfig, SceneLayout, refine_layout
from .render import render_fpv, render_topdown
from .retrieve import select_asset
from .scene import CameraPose, SceneDocument, load_scene, save_scene

__all__ = [
    "CameraPose",
    "EvalBundle",
    "MethodViews",
    "PipelineConfig",
    "RefineConfig",
    "SceneDocument",
    "SceneLayout",
    "SceneliftError",
    "StageFailure",
    "SweepSpec",
    "build_fpv_prompt",
    "build_topdown_prompt",
    "evaluate",
    "generate_fixture",
    "kendall_tau",
    "load_config",
    "load_scene",
    "parse_rankings",
    "refine_layout",
    "render_fpv",
    "render_topdown",
    "run_pipeline",
    "save_scene",
    "select_asset",
]

__version__ = "0.1.0"
