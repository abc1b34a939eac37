"""Run configuration: dataclasses with validation and JSON round-tripping."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .kernel import KernelSpec

MODES = ("gen-env", "map-single", "map-multi", "eval", "sweep")
PROTOCOLS = ("echo", "echoless")

# three-robot weight matrix used for the multi-robot experiments
DEFAULT_WEIGHTS = [[0.5, 0.25, 0.25], [0.25, 0.75, 0.0], [0.25, 0.0, 0.75]]


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class EnvConfig:
    seed: int = 0
    bbox: tuple = (0.0, 0.0, 10.0, 10.0)
    num_classes: int = 2
    num_polygons: int = 6
    radius_range: tuple = (0.5, 1.5)
    vertex_range: tuple = (3, 8)
    margin: float = 1.0
    separation: float = 0.5


@dataclass
class SensorConfig:
    num_rays: int = 180
    fov_deg: float = 360.0
    max_range: float = 10.0
    noise_var: float = 0.0
    class_error: float = 0.0
    num_poses: int = 100
    step: float | None = None
    clearance: float = 0.2


@dataclass
class MapConfig:
    voxel_size: float = 0.1
    frame_size: int = 10
    sigma2: float = 1.0
    delta: float = 1.5
    max_leaf: int = 100
    truncation: float | None = None  # defaults to 3 * voxel_size
    prior_mean: float = 0.5
    lengthscale: float | None = None  # defaults to 3 * voxel_size
    signal_variance: float = 1.0
    cutoff_radius: float | None = None  # defaults to 3 * lengthscale
    max_gap: float = 0.5
    surface_var_threshold: float | None = None  # defaults to 0.5 * signal_variance
    online: bool = False
    selection_radius: float | None = None  # defaults to (frame_size - 1) * voxel_size / 2

    @property
    def epsilon(self) -> float:
        if self.selection_radius is not None:
            return self.selection_radius
        return (self.frame_size - 1) * self.voxel_size / 2.0

    @property
    def truncation_value(self) -> float:
        return 3.0 * self.voxel_size if self.truncation is None else self.truncation

    def kernel(self) -> KernelSpec:
        ell = 3.0 * self.voxel_size if self.lengthscale is None else self.lengthscale
        cutoff = 3.0 * ell if self.cutoff_radius is None else self.cutoff_radius
        return KernelSpec(ell, self.signal_variance, cutoff)


@dataclass
class NetworkConfig:
    weights: list | None = field(default_factory=lambda: [row[:] for row in DEFAULT_WEIGHTS])
    adjacency: list | None = None
    nu: float | None = None
    protocol: str = "echoless"
    extra_rounds: int | None = None  # defaults to n - 1
    trajectory_step: float | None = 1.0


@dataclass
class SweepConfig:
    parameter: str = "max_leaf"
    values: list = field(default_factory=lambda: [4, 16, 64, 256, 1024, 4096])
    seeds: list = field(default_factory=lambda: list(range(3)))


@dataclass
class RunConfig:
    mode: str = "map-single"
    output_dir: str = "out"
    env: EnvConfig = field(default_factory=EnvConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    map: MapConfig = field(default_factory=MapConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    environment_file: str | None = None

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}")
        m = self.map
        for name in ("voxel_size", "sigma2", "signal_variance", "max_gap"):
            v = getattr(m, name)
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"map.{name}", "must be a positive number")
        if not isinstance(m.frame_size, int) or m.frame_size < 1:
            raise ConfigError("map.frame_size", "must be an integer >= 1")
        if m.delta <= 1:
            raise ConfigError("map.delta", "must exceed 1")
        if m.max_leaf < 1:
            raise ConfigError("map.max_leaf", "must be >= 1")
        if m.truncation is not None and m.truncation <= 0:
            raise ConfigError("map.truncation", "must be positive")
        # pseudo-point block must span the selection diameter 2 * epsilon
        if (m.frame_size - 1) * m.voxel_size < 2 * m.epsilon - 1e-12:
            raise ConfigError("map.frame_size", "(frame_size - 1) * voxel_size must be >= 2 * epsilon")
        try:
            m.kernel()
        except ValueError as exc:
            raise ConfigError("map.kernel", str(exc)) from exc
        s = self.sensor
        if s.num_rays < 1:
            raise ConfigError("sensor.num_rays", "must be >= 1")
        if not 0 < s.fov_deg <= 360:
            raise ConfigError("sensor.fov_deg", "must be in (0, 360]")
        if s.max_range <= 0:
            raise ConfigError("sensor.max_range", "must be positive")
        if s.noise_var < 0:
            raise ConfigError("sensor.noise_var", "must be >= 0")
        if not 0 <= s.class_error <= 1:
            raise ConfigError("sensor.class_error", "must be in [0, 1]")
        if s.num_poses < 0:
            raise ConfigError("sensor.num_poses", "must be >= 0")
        e = self.env
        if e.num_classes < 1:
            raise ConfigError("env.num_classes", "must be >= 1")
        if len(e.bbox) != 4 or e.bbox[2] <= e.bbox[0] or e.bbox[3] <= e.bbox[1]:
            raise ConfigError("env.bbox", "must be [xmin, ymin, xmax, ymax] with positive extent")
        if e.margin < m.epsilon + m.voxel_size:
            raise ConfigError("env.margin", "must be at least epsilon + voxel_size so training blocks stay in bounds")
        n = self.network
        if n.protocol not in PROTOCOLS:
            raise ConfigError("network.protocol", f"must be one of {PROTOCOLS}")
        if n.weights is None and n.adjacency is None:
            raise ConfigError("network", "needs either weights or adjacency")
        if n.weights is not None:
            W = np.asarray(n.weights, dtype=float)
            if W.ndim != 2 or W.shape[0] != W.shape[1]:
                raise ConfigError("network.weights", "must be a square matrix")
        if n.extra_rounds is not None and n.extra_rounds < 0:
            raise ConfigError("network.extra_rounds", "must be >= 0")
        if self.mode == "sweep":
            if not self.sweep.values:
                raise ConfigError("sweep.values", "must be non-empty")
            if not hasattr(MapConfig(), self.sweep.parameter) and not hasattr(SensorConfig(), self.sweep.parameter):
                raise ConfigError("sweep.parameter", f"unknown parameter {self.sweep.parameter!r}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        if "mode" not in d:
            raise ConfigError("mode", "required field missing")
        sections = {"env": EnvConfig, "sensor": SensorConfig, "map": MapConfig,
                    "network": NetworkConfig, "sweep": SweepConfig}
        kwargs: dict[str, Any] = {}
        for key, value in d.items():
            if key in sections:
                kwargs[key] = _build(sections[key], value, key)
            elif key in ("mode", "output_dir", "environment_file"):
                kwargs[key] = value
            else:
                raise ConfigError(key, "unknown field")
        return cls(**kwargs).validate()


def _build(section_cls, value, prefix: str):
    if not isinstance(value, dict):
        raise ConfigError(prefix, "must be an object")
    names = {f.name: f for f in dataclasses.fields(section_cls)}
    out = {}
    for k, v in value.items():
        if k not in names:
            raise ConfigError(f"{prefix}.{k}", "unknown field")
        out[k] = tuple(v) if isinstance(v, list) and k in ("bbox", "radius_range", "vertex_range") else v
    try:
        return section_cls(**out)
    except TypeError as exc:
        raise ConfigError(prefix, str(exc)) from exc


def fov_radians(sensor: SensorConfig) -> float:
    return math.radians(sensor.fov_deg)
