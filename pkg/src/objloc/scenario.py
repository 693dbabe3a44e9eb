"""Scenario files: arena, scripted trajectories, sensor and estimator settings.

Scenarios are YAML (or JSON, which YAML also reads). Schema::

    name: str
    ticks: int                         # simulation length
    bounds: {width: m, height: m}
    static_obstacles:                  # wall segments [x1, y1, x2, y2]
      - [0, 0, 16, 0]
    dynamic_obstacles:                 # circular movers that are not the object
      - radius: m
        path: <path>
    robot:
      path: <path>
    object:
      radius: m                        # footprint seen by the LiDAR
      path: <path>
    sensors:                           # any SensorConfig field; angles in radians,
      lidar_angular_resolution_deg: 0.25   # or use the *_deg spelling
      rng_seed: 7
    pipeline:                          # any PipelineParams / GateParams / IdentifyParams field
      vartheta: 0.3
      omega: 10000

    <path> = {waypoints: [[x, y], ...], step: m per tick, loop: bool,
              smooth: corner-cutting passes, start: arc-length offset m,
              heading: rad (only used when the path never moves)}

Headings along a path follow the direction of travel.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from objloc.direction import GateParams
from objloc.identification import IdentifyParams
from objloc.pipeline import PipelineParams
from objloc.sim import (
    ConfigurationError,
    DynamicObstacle,
    Segment,
    SensorConfig,
    SensorLog,
    WorldMap,
    poses_from_path,
    run_scenario,
    waypoint_path,
)

CANONICAL = ("static_robot", "moving_robot")

_PATH_KEYS = {"waypoints", "step", "loop", "smooth", "start", "heading"}


@dataclass
class Scenario:
    name: str
    ticks: int
    world: WorldMap
    robot: np.ndarray
    object: np.ndarray
    object_radius: float
    sensors: SensorConfig
    pipeline: PipelineParams

    def simulate(self, seed: int | None = None) -> SensorLog:
        cfg = self.sensors if seed is None else dataclasses.replace(self.sensors, rng_seed=int(seed))
        return run_scenario(self.world, self.robot, self.object, cfg, self.object_radius)


def _path(spec: dict, ticks: int) -> np.ndarray:
    unknown = set(spec) - _PATH_KEYS
    if unknown:
        raise ConfigurationError(f"unknown path keys {sorted(unknown)}")
    if "waypoints" not in spec:
        raise ConfigurationError("path needs waypoints")
    xy = waypoint_path(
        spec["waypoints"],
        float(spec.get("step", 0.0)),
        ticks,
        loop=bool(spec.get("loop", True)),
        smooth=int(spec.get("smooth", 0)),
        start=float(spec.get("start", 0.0)),
    )
    return xy, float(spec.get("heading", 0.0))


def _sensor_config(spec: dict) -> SensorConfig:
    spec = dict(spec)
    if "lidar_angular_resolution_deg" in spec:
        spec["lidar_angular_resolution"] = math.radians(float(spec.pop("lidar_angular_resolution_deg")))
    names = {f.name for f in dataclasses.fields(SensorConfig)}
    unknown = set(spec) - names
    if unknown:
        raise ConfigurationError(f"unknown sensor keys {sorted(unknown)}")
    return SensorConfig(**spec)


def pipeline_params(spec: dict | None, base: PipelineParams = PipelineParams()) -> PipelineParams:
    """Build :class:`PipelineParams` from a flat mapping of setting names."""
    spec = dict(spec or {})
    top = {f.name for f in dataclasses.fields(PipelineParams)} - {"identify", "gate"}
    gate_names = {f.name for f in dataclasses.fields(GateParams)}
    ident_names = {f.name for f in dataclasses.fields(IdentifyParams)} - {"angular_resolution"}
    unknown = set(spec) - top - gate_names - ident_names
    if unknown:
        raise ConfigurationError(f"unknown pipeline keys {sorted(unknown)}")
    if "band_edges" in spec:
        spec["band_edges"] = tuple(float(v) for v in spec["band_edges"])
    try:
        gate = dataclasses.replace(base.gate, **{k: spec[k] for k in gate_names & set(spec)})
        ident = dataclasses.replace(base.identify, **{k: spec[k] for k in ident_names & set(spec)})
        return dataclasses.replace(
            base, identify=ident, gate=gate, **{k: spec[k] for k in top & set(spec)}
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc


def from_dict(data: dict) -> Scenario:
    try:
        ticks = int(data["ticks"])
        bounds = data["bounds"]
        world = WorldMap(float(bounds["width"]), float(bounds["height"]))
        for seg in data.get("static_obstacles", []) or []:
            world.static_obstacles.append(Segment(*map(float, seg)))
        for dyn in data.get("dynamic_obstacles", []) or []:
            xy, _ = _path(dyn["path"], ticks)
            world.dynamic_obstacles.append(DynamicObstacle(float(dyn["radius"]), xy))
        rxy, rh = _path(data["robot"]["path"], ticks)
        oxy, oh = _path(data["object"]["path"], ticks)
        sensors = _sensor_config(data.get("sensors", {}) or {})
        return Scenario(
            name=str(data.get("name", "scenario")),
            ticks=ticks,
            world=world,
            robot=poses_from_path(rxy, rh),
            object=poses_from_path(oxy, oh),
            object_radius=float(data["object"].get("radius", 0.1)),
            sensors=sensors,
            pipeline=pipeline_params(data.get("pipeline")),
        )
    except KeyError as exc:
        raise ConfigurationError(f"scenario is missing {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from exc


def load(path) -> Scenario:
    """Load a scenario file, or one of the shipped scenarios by name."""
    if str(path) in CANONICAL:
        text = resources.files("objloc.scenarios").joinpath(f"{path}.yaml").read_text(encoding="utf-8")
    else:
        p = Path(path)
        if not p.exists():
            raise ConfigurationError(f"scenario file {p} not found")
        text = p.read_text(encoding="utf-8")
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ConfigurationError("scenario file must hold a mapping")
    return from_dict(data)
