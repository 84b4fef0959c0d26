"""Run configuration shared by the pipeline, the evaluation harness and the CLI."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PyramidConfig:
    octaves: int = 4
    intervals: int = 4
    beta: float = 1.25
    base_sigma: float = 1.0
    # None means 2 ** (1 / intervals): one blur doubling per octave
    sigma_step: float | None = None

    def __post_init__(self):
        if self.octaves < 1 or self.intervals < 1:
            raise ConfigError("octaves and intervals must be >= 1")
        if not self.beta > 1:
            raise ConfigError(f"beta must be > 1, got {self.beta}")
        if not self.base_sigma > 0:
            raise ConfigError(f"base_sigma must be > 0, got {self.base_sigma}")
        if self.sigma_step is not None and not self.sigma_step > 1:
            raise ConfigError(f"sigma_step must be > 1, got {self.sigma_step}")

    @property
    def step(self) -> float:
        if self.sigma_step is None:
            return 2.0 ** (1.0 / self.intervals)
        return self.sigma_step

    def sigmas(self) -> list[float]:
        return [self.base_sigma * self.step ** i for i in range(self.intervals)]


@dataclass(frozen=True)
class HarrisConfig:
    k: float = 0.05
    t_cr_fraction: float = 0.02
    window_sigma: float = 1.0
    nms_radius: int = 1
    border: int = 8

    def __post_init__(self):
        if not self.window_sigma > 0:
            raise ConfigError("window_sigma must be > 0")
        if self.nms_radius < 0 or self.border < 0:
            raise ConfigError("nms_radius and border must be >= 0")
        if not 0 <= self.t_cr_fraction <= 1:
            raise ConfigError("t_cr_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class DescriptorConfig:
    lbp1_points: int = 8
    lbp1_radius: float = 1.0
    lbp2_points: int = 12
    lbp2_radius: float = 2.0
    normalize_blocks: bool = True
    orientation_radius: int = 4
    # mean-shift the winning bin centre to the local dominant gradient direction
    refine_orientation: bool = True

    def __post_init__(self):
        if self.lbp1_points != 8:
            raise ConfigError("the u2 block is defined for 8 neighbours only")
        if self.lbp2_points not in (12, 16):
            raise ConfigError(f"lbp2_points must be 12 or 16, got {self.lbp2_points}")

    @property
    def block_sizes(self) -> tuple[int, int, int, int]:
        return (59, self.lbp2_points + 2, 16, 4)

    @property
    def length(self) -> int:
        return sum(self.block_sizes)


MODEL_KINDS = ("translation", "similarity", "affine")


@dataclass(frozen=True)
class MatcherConfig:
    # one shared threshold, or one per block (u2, riu2, dct, svd)
    eps: float | tuple[float, float, float, float] = (0.3, 0.3, 0.02, 0.005)
    d_min: float = 10.0
    model: str = "similarity"
    iterations: int = 1000
    tol: float = 3.0
    tau_match: int = 4
    # only pair keypoints found on the same pyramid level
    same_level: bool = True
    # radius (px) for drawing the 2nd/3rd sample near the 1st; 0 draws uniformly
    local_radius: float = 40.0
    # allowed scale of similarity/affine hypotheses
    scale_range: tuple[float, float] = (0.5, 2.0)
    # pairs whose endpoints both lie this close (px) count as one correspondence
    merge_radius: float = 2.0
    # inliers must also agree with the model rotation on keypoint orientations
    angle_tol_deg: float = 30.0

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.model!r}")
        eps = self.eps_vector()
        if any(not e > 0 for e in eps):
            raise ConfigError("eps must be > 0")
        if self.d_min < 0 or self.tol < 0 or self.iterations < 1:
            raise ConfigError("d_min and tol must be >= 0, iterations >= 1")
        if self.local_radius < 0 or self.merge_radius < 0:
            raise ConfigError("local_radius and merge_radius must be >= 0")
        lo, hi = self.scale_range
        if not 0 < lo <= 1 <= hi:
            raise ConfigError("scale_range must satisfy 0 < lo <= 1 <= hi")
        if not 0 <= self.angle_tol_deg <= 180:
            raise ConfigError("angle_tol_deg must lie in [0, 180]; 0 disables the check")
        if self.tau_match < 0:
            raise ConfigError("tau_match must be >= 0")

    def eps_vector(self) -> tuple[float, float, float, float]:
        if isinstance(self.eps, (int, float)):
            return (float(self.eps),) * 4
        eps = tuple(float(e) for e in self.eps)
        if len(eps) != 4:
            raise ConfigError("per-block eps needs exactly 4 values")
        return eps


@dataclass(frozen=True)
class RunConfig:
    pyramid: PyramidConfig = field(default_factory=PyramidConfig)
    harris: HarrisConfig = field(default_factory=HarrisConfig)
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunConfig:
        return _merge(cls(), data)

    def override(self, data: dict[str, Any]) -> RunConfig:
        return _merge(self, data)

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)


def _merge(obj, data: dict[str, Any]):
    known = {f.name: f for f in fields(obj)}
    updates = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} in {type(obj).__name__}")
        current = getattr(obj, key)
        if is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"{key} must be an object")
            updates[key] = _merge(current, value)
        elif isinstance(value, list):
            updates[key] = tuple(value)
        else:
            updates[key] = value
    try:
        return replace(obj, **updates)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
