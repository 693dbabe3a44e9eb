"""Residuals and analytic Jacobians for the five edge kinds.

Every kind has a batched kernel ``f(xa, xb, meas) -> (e, Ja, Jb)`` working on
``(N, 3)`` state arrays, so the solver linearises whole edge groups at once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from objloc.geometry import Point2, Pose2, wrap_angles

RANGE_EPS = 1e-9


class Agent(str, enum.Enum):
    ROBOT = "robot"
    OBJECT = "object"


class NodeId(NamedTuple):
    agent: Agent
    t: int

    def __str__(self) -> str:
        return f"{Agent(self.agent).value} {self.t}"


def robot(t: int) -> NodeId:
    return NodeId(Agent.ROBOT, int(t))


def obj(t: int) -> NodeId:
    return NodeId(Agent.OBJECT, int(t))


class EdgeKind(str, enum.Enum):
    ROBOT_ODOM = "robot_odom"
    OBJECT_ODOM = "object_odom"
    UWB_RANGE = "uwb_range"
    LIDAR_POSITION = "lidar_position"
    LIDAR_DIRECTION = "lidar_direction"


DIM = {
    EdgeKind.ROBOT_ODOM: 3,
    EdgeKind.OBJECT_ODOM: 3,
    EdgeKind.UWB_RANGE: 1,
    EdgeKind.LIDAR_POSITION: 2,
    EdgeKind.LIDAR_DIRECTION: 1,
}

ARITY = {
    EdgeKind.ROBOT_ODOM: 2,
    EdgeKind.OBJECT_ODOM: 2,
    EdgeKind.UWB_RANGE: 2,
    EdgeKind.LIDAR_POSITION: 2,
    EdgeKind.LIDAR_DIRECTION: 1,
}

Measurement = Union[Pose2, Point2, float]


def measurement_vector(kind: EdgeKind, m: Measurement) -> np.ndarray:
    if kind in (EdgeKind.ROBOT_ODOM, EdgeKind.OBJECT_ODOM):
        return np.array([m.x, m.y, m.theta])
    if kind is EdgeKind.LIDAR_POSITION:
        return np.array([m.x, m.y])
    return np.array([float(m)])


@dataclass(frozen=True, eq=False)
class Edge:
    """A measurement constraint.

    Endpoints by kind: odometry ``(previous, current)`` of one agent; range and
    position ``(robot_t, object_t)``; direction ``(object_t,)``.
    ``information`` is a ``(d, d)`` symmetric PSD matrix (scalars are accepted
    for 1-D kinds and as isotropic weights for the others).
    """

    kind: EdgeKind
    endpoints: tuple[NodeId, ...]
    measurement: Measurement
    information: np.ndarray

    def __post_init__(self):
        kind = EdgeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "endpoints", tuple(NodeId(Agent(a), int(t)) for a, t in self.endpoints))
        if len(self.endpoints) != ARITY[kind]:
            raise ValueError(f"{kind.value} edges take {ARITY[kind]} endpoint(s)")
        d = DIM[kind]
        info = np.asarray(self.information, dtype=float)
        if info.ndim == 0:
            info = float(info) * np.eye(d)
        if info.shape != (d, d):
            raise ValueError(f"{kind.value} information must be {d}x{d}")
        if not np.allclose(info, info.T, atol=1e-12):
            raise ValueError("information matrix must be symmetric")
        if np.linalg.eigvalsh(info).min() < -1e-9 * max(1.0, np.abs(info).max()):
            raise ValueError("information matrix must be positive semidefinite")
        info.setflags(write=False)
        object.__setattr__(self, "information", info)

    @property
    def meas_vector(self) -> np.ndarray:
        return measurement_vector(self.kind, self.measurement)


def odom_kernel(xa, xb, meas):
    c, s = np.cos(xa[:, 2]), np.sin(xa[:, 2])
    dx, dy = xb[:, 0] - xa[:, 0], xb[:, 1] - xa[:, 1]
    n = len(xa)
    e = np.empty((n, 3))
    e[:, 0] = c * dx + s * dy - meas[:, 0]
    e[:, 1] = -s * dx + c * dy - meas[:, 1]
    e[:, 2] = wrap_angles(xb[:, 2] - xa[:, 2] - meas[:, 2])
    Ja = np.zeros((n, 3, 3))
    Ja[:, 0, 0], Ja[:, 0, 1], Ja[:, 0, 2] = -c, -s, -s * dx + c * dy
    Ja[:, 1, 0], Ja[:, 1, 1], Ja[:, 1, 2] = s, -c, -c * dx - s * dy
    Ja[:, 2, 2] = -1.0
    Jb = np.zeros((n, 3, 3))
    Jb[:, 0, 0], Jb[:, 0, 1] = c, s
    Jb[:, 1, 0], Jb[:, 1, 1] = -s, c
    Jb[:, 2, 2] = 1.0
    return e, Ja, Jb


def range_kernel(xr, xo, meas):
    dx, dy = xo[:, 0] - xr[:, 0], xo[:, 1] - xr[:, 1]
    dist = np.hypot(dx, dy)
    e = (dist - meas[:, 0])[:, None]
    # removable singularity at coincident positions
    safe = np.maximum(dist, RANGE_EPS)
    ux, uy = dx / safe, dy / safe
    n = len(xr)
    Jo = np.zeros((n, 1, 3))
    Jo[:, 0, 0], Jo[:, 0, 1] = ux, uy
    return e, -Jo, Jo


def position_kernel(xr, xo, meas):
    c, s = np.cos(xr[:, 2]), np.sin(xr[:, 2])
    dx, dy = xo[:, 0] - xr[:, 0], xo[:, 1] - xr[:, 1]
    n = len(xr)
    e = np.empty((n, 2))
    e[:, 0] = c * dx + s * dy - meas[:, 0]
    e[:, 1] = -s * dx + c * dy - meas[:, 1]
    Jr = np.zeros((n, 2, 3))
    Jr[:, 0, 0], Jr[:, 0, 1], Jr[:, 0, 2] = -c, -s, -s * dx + c * dy
    Jr[:, 1, 0], Jr[:, 1, 1], Jr[:, 1, 2] = s, -c, -c * dx - s * dy
    Jo = np.zeros((n, 2, 3))
    Jo[:, 0, 0], Jo[:, 0, 1] = c, s
    Jo[:, 1, 0], Jo[:, 1, 1] = -s, c
    return e, Jr, Jo


def direction_kernel(xo, _unused, meas):
    n = len(xo)
    e = wrap_angles(xo[:, 2] - meas[:, 0])[:, None]
    Jo = np.zeros((n, 1, 3))
    Jo[:, 0, 2] = 1.0
    return e, Jo, None


KERNELS = {
    EdgeKind.ROBOT_ODOM: odom_kernel,
    EdgeKind.OBJECT_ODOM: odom_kernel,
    EdgeKind.UWB_RANGE: range_kernel,
    EdgeKind.LIDAR_POSITION: position_kernel,
    EdgeKind.LIDAR_DIRECTION: direction_kernel,
}


def evaluate_edge(edge: Edge, states: list[np.ndarray]):
    """Residual and per-endpoint Jacobians of one edge given endpoint states."""
    xa = np.asarray(states[0], dtype=float).reshape(1, 3)
    xb = np.asarray(states[1], dtype=float).reshape(1, 3) if len(states) > 1 else None
    e, Ja, Jb = KERNELS[edge.kind](xa, xb, edge.meas_vector[None, :])
    jacs = [Ja[0]] if Jb is None else [Ja[0], Jb[0]]
    return e[0], jacs
