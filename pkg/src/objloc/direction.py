"""Object heading from successive detections, and the heading-trust gate."""

from __future__ import annotations

import math
from dataclasses import dataclass

from objloc.geometry import Point2, angle_diff, wrap_angle


@dataclass(frozen=True)
class GateParams:
    vartheta: float = 0.3
    omega: float = 10000.0
    min_displacement: float = 0.02

    def __post_init__(self):
        if not self.vartheta > 0:
            raise ValueError("vartheta must be positive")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.min_displacement < 0:
            raise ValueError("min_displacement must be >= 0")


@dataclass(frozen=True)
class LidarObjectPose:
    """LiDAR-derived object observation at tick ``t``.

    ``direction`` is None unless the object was also detected on the previous
    scan; ``direction_weight`` is the heading information (``omega`` or 0).
    """

    t: int
    position: Point2
    direction: float | None = None
    direction_weight: float = 0.0


def moving_direction(prev: Point2, curr: Point2, min_displacement: float = 0.0) -> float | None:
    """Heading of travel from ``prev`` to ``curr``; None if the move is too short."""
    dx, dy = curr.x - prev.x, curr.y - prev.y
    if math.hypot(dx, dy) < min_displacement or (dx == 0.0 and dy == 0.0):
        return None
    return wrap_angle(math.atan2(dy, dx))


def gate(direction: float, theta_pgo: float, params: GateParams = GateParams()) -> float:
    """Heading information: ``omega`` when the measured direction agrees with the
    current orientation estimate to within ``vartheta`` (wrapped), else 0."""
    if abs(angle_diff(direction, theta_pgo)) <= params.vartheta:
        return params.omega
    return 0.0
