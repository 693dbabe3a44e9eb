"""Deterministic 2D world: ray-cast LiDAR, UWB ranging and drifting odometry.

Everything runs on a single integer tick clock. Sensors report on ticks that
are multiples of their rate divisor; odometry reports on every tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from objloc.geometry import Pose2, between, wrap_angle, wrap_angles
from objloc.types import OdomIncrement, PointCloud, RangeMeasurement

_EPS = 1e-12


class ConfigurationError(ValueError):
    """Raised for inconsistent scenario or sensor configuration."""


@dataclass(frozen=True)
class Segment:
    x1: float
    y1: float
    x2: float
    y2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=float)


@dataclass
class DynamicObstacle:
    """Circle of fixed radius following a scripted ``(T, 2)`` centre path."""

    radius: float
    path: np.ndarray

    def __post_init__(self):
        self.path = np.asarray(self.path, dtype=float).reshape(-1, 2)
        if self.radius <= 0:
            raise ConfigurationError("obstacle radius must be positive")

    def position(self, t: int) -> np.ndarray:
        return self.path[t]


@dataclass
class WorldMap:
    width: float
    height: float
    static_obstacles: list[Segment] = field(default_factory=list)
    dynamic_obstacles: list[DynamicObstacle] = field(default_factory=list)

    def segment_array(self) -> np.ndarray:
        if not self.static_obstacles:
            return np.zeros((0, 4))
        return np.array([s.as_array() for s in self.static_obstacles])

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        return -margin <= x <= self.width + margin and -margin <= y <= self.height + margin

    def validate(self, ticks: int | None = None) -> None:
        for s in self.static_obstacles:
            if not (self.contains(s.x1, s.y1, 1e-9) and self.contains(s.x2, s.y2, 1e-9)):
                raise ConfigurationError(f"segment {s} lies outside the world bounds")
        for i, obs in enumerate(self.dynamic_obstacles):
            if ticks is not None and len(obs.path) < ticks:
                raise ConfigurationError(
                    f"dynamic obstacle {i} defines {len(obs.path)} ticks, need {ticks}"
                )
            lo = obs.path - obs.radius
            hi = obs.path + obs.radius
            if (lo < -1e-9).any() or (hi[:, 0] > self.width + 1e-9).any() or (
                hi[:, 1] > self.height + 1e-9
            ).any():
                raise ConfigurationError(f"dynamic obstacle {i} leaves the world bounds")


@dataclass(frozen=True)
class SensorConfig:
    """Sensor models. Defaults are synthetic choices, not measured hardware values."""

    lidar_angular_resolution: float = math.radians(0.25)
    lidar_max_range: float = 30.0
    lidar_range_noise_sigma: float = 0.002
    lidar_rate_divisor: int = 1
    uwb_noise_sigma: float = 0.05
    uwb_nlos_bias: float = 0.5
    uwb_rate_divisor: int = 1
    odom_trans_noise_sigma: float = 0.005
    odom_rot_noise_sigma: float = 0.005
    rng_seed: int = 0

    def __post_init__(self):
        if not self.lidar_angular_resolution > 0:
            raise ConfigurationError("lidar_angular_resolution must be positive")
        if self.lidar_max_range <= 0:
            raise ConfigurationError("lidar_max_range must be positive")
        for name in (
            "lidar_range_noise_sigma",
            "uwb_noise_sigma",
            "uwb_nlos_bias",
            "odom_trans_noise_sigma",
            "odom_rot_noise_sigma",
        ):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.lidar_rate_divisor < 1 or self.uwb_rate_divisor < 1:
            raise ConfigurationError("rate divisors must be >= 1")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigurationError("rng_seed must be an unsigned 64-bit integer")

    def ray_angles(self) -> np.ndarray:
        n = int(math.floor(2.0 * math.pi / self.lidar_angular_resolution + 1e-9))
        return wrap_angles(np.arange(n) * self.lidar_angular_resolution)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def ray_segment_distances(origin, directions: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Distance along each unit ray to each segment, ``inf`` where there is no hit.

    Returns an ``(n_rays, n_segments)`` array.
    """
    o = np.asarray(origin, dtype=float)[:2]
    d = directions[:, None, :]
    p = segments[None, :, 0:2]
    e = segments[None, :, 2:4] - segments[None, :, 0:2]
    denom = _cross(d, e)
    op = p - o
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(op, e) / denom
        u = _cross(op, d) / denom
    ok = (np.abs(denom) > _EPS) & (t > _EPS) & (u >= -1e-12) & (u <= 1.0 + 1e-12)
    return np.where(ok, t, np.inf)


def ray_circle_distances(origin, directions: np.ndarray, circles: np.ndarray) -> np.ndarray:
    """Distance along each unit ray to the first crossing of each circle ``(cx, cy, r)``."""
    o = np.asarray(origin, dtype=float)[:2]
    f = o - circles[None, :, 0:2]
    b = np.einsum("nk,mk->nm", directions, f[0])
    c = np.sum(f[0] ** 2, axis=1)[None, :] - circles[None, :, 2] ** 2
    disc = b * b - c
    with np.errstate(invalid="ignore"):
        t = -b - np.sqrt(disc)
    # sensor inside a footprint sees nothing from that circle
    ok = (disc >= 0) & (t > _EPS) & (c > 0)
    return np.where(ok, t, np.inf)


def _circles_at(world: WorldMap, t: int, extra=None) -> np.ndarray:
    rows = [(*obs.position(t), obs.radius) for obs in world.dynamic_obstacles]
    if extra is not None:
        rows.extend(tuple(c) for c in extra)
    return np.array(rows, dtype=float).reshape(-1, 3)


def raycast_scan(
    world: WorldMap,
    sensor_pose: Pose2,
    cfg: SensorConfig,
    t: int,
    rng: np.random.Generator | None = None,
    extra_circles=None,
) -> PointCloud:
    """Simulate one 360 degree scan; points are returned in the sensor body frame.

    ``extra_circles`` adds ``(cx, cy, r)`` footprints visible at this tick only,
    which is how the tracked object shows up in scans.
    """
    if not world.contains(sensor_pose.x, sensor_pose.y):
        raise ConfigurationError("sensor pose outside the world bounds")
    body = cfg.ray_angles()
    world_dirs = np.column_stack([np.cos(body + sensor_pose.theta), np.sin(body + sensor_pose.theta)])
    origin = (sensor_pose.x, sensor_pose.y)

    best = np.full(len(body), np.inf)
    segs = world.segment_array()
    if len(segs):
        best = np.minimum(best, ray_segment_distances(origin, world_dirs, segs).min(axis=1))
    circles = _circles_at(world, t, extra_circles)
    if len(circles):
        best = np.minimum(best, ray_circle_distances(origin, world_dirs, circles).min(axis=1))

    noise = np.zeros(len(body))
    if cfg.lidar_range_noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(cfg.rng_seed)
        # one draw per ray keeps the stream aligned whatever is hit
        noise = rng.normal(0.0, cfg.lidar_range_noise_sigma, len(body))

    hit = best <= cfg.lidar_max_range
    r = np.clip(best[hit] + noise[hit], 0.0, cfg.lidar_max_range)
    pts = np.column_stack([r * np.cos(body[hit]), r * np.sin(body[hit])])
    return PointCloud(t, pts)


def segments_intersect(p: np.ndarray, q: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Boolean mask of ``segments`` (``(M, 4)``) that touch the segment ``p``-``q``."""
    if len(segments) == 0:
        return np.zeros(0, dtype=bool)
    a, b = segments[:, 0:2], segments[:, 2:4]
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)

    def orient(u, v, w):
        return np.sign((v[..., 0] - u[..., 0]) * (w[..., 1] - u[..., 1]) - (v[..., 1] - u[..., 1]) * (w[..., 0] - u[..., 0]))

    def on_seg(u, v, w):
        return (
            (np.minimum(u[..., 0], v[..., 0]) - 1e-12 <= w[..., 0])
            & (w[..., 0] <= np.maximum(u[..., 0], v[..., 0]) + 1e-12)
            & (np.minimum(u[..., 1], v[..., 1]) - 1e-12 <= w[..., 1])
            & (w[..., 1] <= np.maximum(u[..., 1], v[..., 1]) + 1e-12)
        )

    P = np.broadcast_to(p, a.shape)
    Q = np.broadcast_to(q, a.shape)
    o1, o2 = orient(P, Q, a), orient(P, Q, b)
    o3, o4 = orient(a, b, P), orient(a, b, Q)
    proper = (o1 != o2) & (o3 != o4)
    touch = (
        ((o1 == 0) & on_seg(P, Q, a))
        | ((o2 == 0) & on_seg(P, Q, b))
        | ((o3 == 0) & on_seg(a, b, P))
        | ((o4 == 0) & on_seg(a, b, Q))
    )
    return proper | touch


def line_of_sight(world: WorldMap, a, b) -> bool:
    return not segments_intersect(np.asarray(a)[:2], np.asarray(b)[:2], world.segment_array()).any()


def sample_uwb(
    world: WorldMap,
    robot_pose: Pose2,
    object_pose: Pose2,
    cfg: SensorConfig,
    t: int,
    rng: np.random.Generator | None = None,
) -> RangeMeasurement:
    """Range between the two tags; blocked paths read long by ``uwb_nlos_bias``."""
    a = np.array([robot_pose.x, robot_pose.y])
    b = np.array([object_pose.x, object_pose.y])
    los = line_of_sight(world, a, b)
    r = float(np.hypot(*(b - a)))
    if cfg.uwb_noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(cfg.rng_seed)
        r += float(rng.normal(0.0, cfg.uwb_noise_sigma))
    if not los:
        r += cfg.uwb_nlos_bias
    return RangeMeasurement(t, max(r, 0.0), los)


def sample_odometry(
    true_prev: Pose2,
    true_curr: Pose2,
    cfg: SensorConfig,
    rng: np.random.Generator | None = None,
    t: int = 0,
) -> OdomIncrement:
    """Noisy relative motion. A stationary agent reports an exact identity increment."""
    if true_prev == true_curr:
        return OdomIncrement(t, Pose2.identity())
    delta = between(true_prev, true_curr)
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    n = rng.normal(0.0, 1.0, 3)
    return OdomIncrement(
        t,
        Pose2(
            delta.x + cfg.odom_trans_noise_sigma * n[0],
            delta.y + cfg.odom_trans_noise_sigma * n[1],
            wrap_angle(delta.theta + cfg.odom_rot_noise_sigma * n[2]),
        ),
    )


@dataclass
class SensorLog:
    """Everything the estimators see, plus ground truth for evaluation."""

    ticks: int
    config: SensorConfig
    robot_truth: list[Pose2] = field(default_factory=list)
    object_truth: list[Pose2] = field(default_factory=list)
    robot_odom: list[OdomIncrement] = field(default_factory=list)
    object_odom: list[OdomIncrement] = field(default_factory=list)
    ranges: list[RangeMeasurement] = field(default_factory=list)
    scans: list[PointCloud] = field(default_factory=list)

    @property
    def has_ground_truth(self) -> bool:
        return len(self.robot_truth) == self.ticks and len(self.object_truth) == self.ticks

    def range_at(self) -> dict[int, RangeMeasurement]:
        return {m.t: m for m in self.ranges}

    def scan_at(self) -> dict[int, PointCloud]:
        return {s.t: s for s in self.scans}


def _as_poses(traj) -> list[Pose2]:
    if len(traj) and isinstance(traj[0], Pose2):
        return list(traj)
    arr = np.asarray(traj, dtype=float).reshape(-1, 3)
    return [Pose2(*row) for row in arr]


def run_scenario(
    world: WorldMap,
    robot_traj,
    object_traj,
    cfg: SensorConfig,
    object_radius: float = 0.1,
) -> SensorLog:
    """Generate a full sensor log; the output is a pure function of the inputs and seed."""
    robot = _as_poses(robot_traj)
    obj = _as_poses(object_traj)
    if len(robot) != len(obj):
        raise ConfigurationError(
            f"trajectory lengths differ: robot {len(robot)} vs object {len(obj)}"
        )
    ticks = len(robot)
    if ticks == 0:
        raise ConfigurationError("empty trajectory")
    world.validate(ticks)

    ss = np.random.SeedSequence(cfg.rng_seed)
    lidar_rng, uwb_rng, odom_r_rng, odom_o_rng = (np.random.default_rng(s) for s in ss.spawn(4))

    log = SensorLog(ticks=ticks, config=cfg, robot_truth=robot, object_truth=obj)
    for t in range(ticks):
        if t > 0:
            log.robot_odom.append(sample_odometry(robot[t - 1], robot[t], cfg, odom_r_rng, t))
            log.object_odom.append(sample_odometry(obj[t - 1], obj[t], cfg, odom_o_rng, t))
        if t % cfg.uwb_rate_divisor == 0:
            log.ranges.append(sample_uwb(world, robot[t], obj[t], cfg, t, uwb_rng))
        if t % cfg.lidar_rate_divisor == 0:
            extra = [(obj[t].x, obj[t].y, object_radius)]
            log.scans.append(raycast_scan(world, robot[t], cfg, t, lidar_rng, extra))
    return log


def chaikin(points: np.ndarray, iterations: int, closed: bool) -> np.ndarray:
    """Corner-cutting smoothing of a polyline."""
    pts = np.asarray(points, dtype=float)
    for _ in range(iterations):
        if len(pts) < 3:
            break
        a = pts if closed else pts[:-1]
        b = np.roll(pts, -1, axis=0) if closed else pts[1:]
        q = 0.75 * a + 0.25 * b
        r = 0.25 * a + 0.75 * b
        new = np.empty((2 * len(a), 2))
        new[0::2], new[1::2] = q, r
        if not closed:
            new = np.vstack([pts[:1], new, pts[-1:]])
        pts = new
    return pts


def waypoint_path(
    waypoints,
    step: float,
    ticks: int,
    loop: bool = True,
    smooth: int = 0,
    start: float = 0.0,
) -> np.ndarray:
    """Positions ``(ticks, 2)`` advancing ``step`` metres per tick along a polyline.

    Closed (``loop``) paths wrap around; open paths stop at the last waypoint.
    """
    wp = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    if len(wp) == 1 or step == 0:
        return np.repeat(wp[:1], ticks, axis=0)
    wp = chaikin(wp, smooth, loop)
    if loop:
        wp = np.vstack([wp, wp[:1]])
    seg = np.hypot(*np.diff(wp, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    s = start + step * np.arange(ticks)
    s = np.mod(s, total) if loop else np.clip(s, 0.0, total)
    x = np.interp(s, cum, wp[:, 0])
    y = np.interp(s, cum, wp[:, 1])
    return np.column_stack([x, y])


def poses_from_path(path: np.ndarray, heading: float = 0.0) -> np.ndarray:
    """Attach headings to a position path: each pose faces along its last move.

    The first pose faces its first move; a path that never moves keeps ``heading``.
    """
    path = np.asarray(path, dtype=float).reshape(-1, 2)
    n = len(path)
    theta = np.empty(n)
    current = heading
    d = np.diff(path, axis=0)
    moving = np.hypot(d[:, 0], d[:, 1]) > 1e-12
    first = np.argmax(moving) if moving.any() else None
    if first is not None:
        current = math.atan2(d[first, 1], d[first, 0])
    theta[0] = current
    for t in range(1, n):
        if moving[t - 1]:
            current = math.atan2(d[t - 1, 1], d[t - 1, 0])
        theta[t] = current
    return np.column_stack([path, theta])
