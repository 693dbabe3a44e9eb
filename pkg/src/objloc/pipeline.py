"""Tick-by-tick estimation: build the pose graph from a sensor log and solve it.

Each tick adds a robot and an object node seeded by odometry, then the
measurement edges the approach enables. The heading gate compares the LiDAR
moving direction with the object orientation the graph currently holds for
that tick, so the graph is re-optimised online (over a sliding window) and
once more in full at the end.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from objloc.direction import GateParams, LidarObjectPose, gate, moving_direction
from objloc.geometry import Point2, Pose2, transform_point
from objloc.identification import IdentifyParams, ObjectDetection, ObjectIdentifier
from objloc.posegraph import Edge, EdgeKind, Huber, OptimizeReport, PoseGraph, obj, optimize, robot
from objloc.sim import ConfigurationError, SensorLog


@dataclass(frozen=True)
class ApproachSpec:
    """Which constraint families an estimator uses on top of odometry."""

    name: str
    uwb: bool
    lidar_position: bool
    lidar_direction: bool
    rejection: bool

    def __post_init__(self):
        if self.rejection and not self.lidar_direction:
            raise ValueError("rejection only applies when lidar_direction is enabled")
        if self.lidar_direction and not self.lidar_position:
            raise ValueError("lidar_direction requires lidar_position")

    @property
    def uses_lidar(self) -> bool:
        return self.lidar_position or self.lidar_direction

    @property
    def odometry_only(self) -> bool:
        return not (self.uwb or self.uses_lidar)


APPROACHES = {
    a.name: a
    for a in (
        ApproachSpec("pure_odom", uwb=False, lidar_position=False, lidar_direction=False, rejection=False),
        ApproachSpec("odom_uwb", uwb=True, lidar_position=False, lidar_direction=False, rejection=False),
        ApproachSpec("odom_lidar", uwb=False, lidar_position=True, lidar_direction=True, rejection=True),
        ApproachSpec(
            "odom_uwb_lidar_no_direction", uwb=True, lidar_position=True, lidar_direction=False, rejection=False
        ),
        ApproachSpec(
            "odom_uwb_lidar_no_rejection", uwb=True, lidar_position=True, lidar_direction=True, rejection=False
        ),
        ApproachSpec("full", uwb=True, lidar_position=True, lidar_direction=True, rejection=True),
    )
}


def get_approach(name: str | ApproachSpec) -> ApproachSpec:
    if isinstance(name, ApproachSpec):
        return name
    try:
        return APPROACHES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown approach {name!r}; choose from {', '.join(APPROACHES)}"
        ) from None


@dataclass(frozen=True)
class PipelineParams:
    """Estimator settings. Information values default to 1 except the gated heading."""

    identify: IdentifyParams = IdentifyParams()
    gate: GateParams = GateParams()
    odom_information: float = 1.0
    uwb_information: float = 1.0
    position_information: float = 1.0
    window: int | None = 10
    online_iters: int = 10
    online_tol: float = 1e-6
    final_batch: bool = False
    final_iters: int = 100
    final_tol: float = 1e-9
    huber_delta: float | None = None

    def replace(self, **changes) -> PipelineParams:
        """Copy with changes; ``vartheta``/``omega``/``min_displacement`` go to the gate."""
        gate_keys = {k: changes.pop(k) for k in ("vartheta", "omega", "min_displacement") if k in changes}
        out = dataclasses.replace(self, **changes)
        if gate_keys:
            out = dataclasses.replace(out, gate=dataclasses.replace(out.gate, **gate_keys))
        return out


@dataclass
class PipelineResult:
    approach: ApproachSpec
    robot: list[Pose2]
    object: list[Pose2]
    detections: list[ObjectDetection] = field(default_factory=list)
    lidar_poses: list[LidarObjectPose] = field(default_factory=list)
    graph: PoseGraph | None = None
    report: OptimizeReport | None = None


def run_pipeline(
    log: SensorLog,
    approach: str | ApproachSpec = "full",
    params: PipelineParams = PipelineParams(),
    initial_robot: Pose2 | None = None,
    initial_object: Pose2 | None = None,
) -> PipelineResult:
    """Estimate both trajectories from ``log`` with the approach's constraints.

    The first robot and object poses are taken as known (from ground truth
    unless given) and held fixed; they anchor the graph.
    """
    approach = get_approach(approach)
    if initial_robot is None or initial_object is None:
        if not log.robot_truth or not log.object_truth:
            raise ConfigurationError("initial poses are needed: pass them or include ground truth")
        initial_robot = initial_robot or log.robot_truth[0]
        initial_object = initial_object or log.object_truth[0]

    ident_params = dataclasses.replace(params.identify, angular_resolution=log.config.lidar_angular_resolution)
    identifier = ObjectIdentifier(ident_params)
    kernel = Huber(params.huber_delta) if params.huber_delta else None
    odom_info = params.odom_information * np.eye(3)
    pos_info = params.position_information * np.eye(2)

    ranges = log.range_at()
    scans = log.scan_at()
    r_odom = {m.t: m.delta for m in log.robot_odom}
    o_odom = {m.t: m.delta for m in log.object_odom}

    g = PoseGraph()
    g.add_node(robot(0), initial_robot)
    g.add_node(obj(0), initial_object)
    g.fix(robot(0))
    g.fix(obj(0))

    # detections are mapped to the world frame with dead-reckoned robot poses
    robot_dr = [initial_robot]
    result = PipelineResult(approach, [], [])
    last_scan_t = None
    last_det: ObjectDetection | None = None
    report = None

    for t in range(log.ticks):
        if t > 0:
            dr, do = r_odom.get(t), o_odom.get(t)
            if dr is None or do is None:
                raise ConfigurationError(f"missing odometry at tick {t}")
            g.add_node(robot(t), g.estimate(robot(t - 1)) @ dr)
            g.add_node(obj(t), g.estimate(obj(t - 1)) @ do)
            g.add_edge(Edge(EdgeKind.ROBOT_ODOM, (robot(t - 1), robot(t)), dr, odom_info))
            g.add_edge(Edge(EdgeKind.OBJECT_ODOM, (obj(t - 1), obj(t)), do, odom_info))
            identifier.add_motion(dr)
            robot_dr.append(robot_dr[-1] @ dr)

        rng = ranges.get(t)
        if approach.uwb and rng is not None:
            g.add_edge(Edge(EdgeKind.UWB_RANGE, (robot(t), obj(t)), rng.range, params.uwb_information))

        if approach.uses_lidar and t in scans:
            det = identifier.update(scans[t], rng)
            prev_det = last_det if last_scan_t is not None and last_det is not None else None
            last_scan_t, last_det = t, det
            if det is not None:
                result.detections.append(det)
                g.add_edge(Edge(EdgeKind.LIDAR_POSITION, (robot(t), obj(t)), det.position, pos_info))
                lp = LidarObjectPose(t, det.position)
                if approach.lidar_direction and prev_det is not None:
                    lp = _direction_edge(g, robot_dr, approach, params.gate, prev_det, det, lp)
                result.lidar_poses.append(lp)

        if t > 0 and not approach.odometry_only:
            free = None
            if params.window is not None:
                free = [n for k in range(max(1, t - params.window + 1), t + 1) for n in (robot(k), obj(k))]
            report = optimize(
                g, params.online_iters, params.online_tol, free_nodes=free, kernel=kernel
            )

    if params.final_batch and not approach.odometry_only and log.ticks > 1:
        report = optimize(g, params.final_iters, params.final_tol, kernel=kernel)

    result.robot = [g.estimate(robot(t)) for t in range(log.ticks)]
    result.object = [g.estimate(obj(t)) for t in range(log.ticks)]
    result.graph = g
    result.report = report
    return result


def _direction_edge(g, robot_dr, approach, gate_params, prev_det, det, lp):
    """Heading from two successive detections, both mapped to the world frame with
    the robot's odometry poses, weighted by the gate."""
    prev_world = transform_point(robot_dr[prev_det.t], prev_det.position)
    curr_world = transform_point(robot_dr[det.t], det.position)
    heading = moving_direction(prev_world, curr_world, gate_params.min_displacement)
    if heading is None:
        return lp
    if approach.rejection:
        weight = gate(heading, g.estimate(obj(det.t)).theta, gate_params)
    else:
        weight = gate_params.omega
    if weight > 0:
        g.add_edge(Edge(EdgeKind.LIDAR_DIRECTION, (obj(det.t),), heading, weight))
    return LidarObjectPose(det.t, det.position, heading, weight)


def world_detection(pose: Pose2, det: ObjectDetection) -> Point2:
    return transform_point(pose, det.position)
