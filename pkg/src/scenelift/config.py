"""Pipeline configuration: one TOML file, full defaults, strict keys.

Every default reproduces the corresponding module constant, so an
empty (or absent) config runs the stock pipeline. Unknown sections or
keys are errors rather than silently ignored typos.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .extract import EROSION_ALPHA, EROSION_R_MAX, EROSION_R_MIN
from .mllm import MllmClientConfig
from .orient import TRIM_FRACTION
from .refine import RefineConfig
from .retrieve import ICP_MAX_ITER, ICP_SUBSAMPLE, ICP_TOL


@dataclass(frozen=True, slots=True)
class ErosionConfig:
    enabled: bool = True
    alpha: float = EROSION_ALPHA
    r_min: int = EROSION_R_MIN
    r_max: int = EROSION_R_MAX


@dataclass(frozen=True, slots=True)
class OrientConfig:
    trim_fraction: float = TRIM_FRACTION


@dataclass(frozen=True, slots=True)
class IcpConfig:
    max_iter: int = ICP_MAX_ITER
    tol: float = ICP_TOL
    subsample: int = ICP_SUBSAMPLE
    seed: int = 0
    top_k: int = 5


@dataclass(frozen=True, slots=True)
class RenderConfig:
    topdown_resolution: tuple = (512, 512)


@dataclass(frozen=True, slots=True)
class SweepConfig:
    n_views: int = 12
    eye_height: float = 1.5
    fov: float = 1.2
    resolution: tuple = (256, 256)


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    erosion: ErosionConfig = field(default_factory=ErosionConfig)
    orient: OrientConfig = field(default_factory=OrientConfig)
    icp: IcpConfig = field(default_factory=IcpConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    mllm: MllmClientConfig = field(default_factory=MllmClientConfig)
    workers: int = 1
    tau_variant: str = "b"


_SECTION_TYPES = {
    "erosion": ErosionConfig,
    "orient": OrientConfig,
    "icp": IcpConfig,
    "refine": RefineConfig,
    "render": RenderConfig,
    "sweep": SweepConfig,
    "mllm": MllmClientConfig,
}
_TOP_LEVEL = {"workers": int, "tau_variant": str}


def _coerce(default_value, raw):
    if isinstance(default_value, bool):
        if not isinstance(raw, bool):
            raise ValueError(f"expected a boolean, got {raw!r}")
        return raw
    if isinstance(default_value, int):
        return int(raw)
    if isinstance(default_value, float):
        return float(raw)
    if isinstance(default_value, tuple):
        return tuple(raw)
    if isinstance(default_value, str):
        return str(raw)
    return raw


def _build_section(name: str, cls, data: dict):
    base = cls()
    names = [f.name for f in dataclasses.fields(cls)]
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ValueError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    kwargs = {k: _coerce(getattr(base, k), v) for k, v in data.items()}
    return dataclasses.replace(base, **kwargs)


def load_config(path=None) -> PipelineConfig:
    """Parse a TOML config file; None gives the full defaults."""
    if path is None:
        return PipelineConfig()
    raw = tomli.loads(Path(path).read_text(encoding="utf-8"))
    sections = {}
    top = {}
    for key, value in raw.items():
        if key in _SECTION_TYPES:
            if not isinstance(value, dict):
                raise ValueError(f"[{key}] must be a table")
            sections[key] = _build_section(key, _SECTION_TYPES[key], value)
        elif key in _TOP_LEVEL:
            top[key] = _TOP_LEVEL[key](value)
        else:
            raise ValueError(f"unknown config key: {key}")
    if top.get("workers", 1) < 1:
        raise ValueError("workers must be >= 1")
    if top.get("tau_variant", "b") not in ("a", "b"):
        raise ValueError("tau_variant must be 'a' or 'b'")
    return PipelineConfig(**sections, **top)
