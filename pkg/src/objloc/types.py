"""Measurement containers shared by the simulator and the estimation pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from objloc.geometry import Pose2


@dataclass(frozen=True)
class PointCloud:
    """One LiDAR scan as an ``(N, 2)`` array of points in the sensor body frame."""

    t: int
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.t == other.t and np.array_equal(self.points, other.points)

    __hash__ = None


@dataclass(frozen=True)
class RangeMeasurement:
    t: int
    range: float
    los: bool = True

    def __post_init__(self):
        if self.range < 0:
            raise ValueError("range must be non-negative")


@dataclass(frozen=True)
class OdomIncrement:
    """Relative motion between ticks ``t - 1`` and ``t`` in the previous body frame."""

    t: int
    delta: Pose2
