"""SE(2) pose algebra and angle helpers.

Angles are always wrapped to the half-open interval (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if -math.pi < a <= math.pi:
        return float(a)
    w = math.fmod(a + math.pi, TWO_PI)
    if w <= 0.0:
        w += TWO_PI
    w -= math.pi
    # fmod rounding can land a hair outside the interval
    if w <= -math.pi:
        w += TWO_PI
    elif w > math.pi:
        w -= TWO_PI
    return w


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorised :func:`wrap_angle`."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, TWO_PI)
    w = np.where(w <= 0.0, w + TWO_PI, w) - np.pi
    w = np.where(w <= -np.pi, w + TWO_PI, w)
    return np.where((a > -np.pi) & (a <= np.pi), a, w)


def angle_diff(a: float, b: float) -> float:
    """Return ``a - b`` wrapped to (-pi, pi]."""
    return wrap_angle(a - b)


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        x, y = float(self.x), float(self.y)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Pose2:
    """Planar pose ``(x, y, theta)``; theta is wrapped on construction."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @classmethod
    def identity(cls) -> Pose2:
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, v) -> Pose2:
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def position(self) -> Point2:
        return Point2(self.x, self.y)

    def matrix(self) -> np.ndarray:
        """3x3 homogeneous transform."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]])

    def __matmul__(self, other: Pose2) -> Pose2:
        return compose(self, other)


def compose(a: Pose2, b: Pose2) -> Pose2:
    """Return ``a (+) b``: ``b`` expressed in ``a``'s frame, mapped to the outer frame."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta)


def inverse(a: Pose2) -> Pose2:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(-c * a.x - s * a.y, s * a.x - c * a.y, -a.theta)


def between(a: Pose2, b: Pose2) -> Pose2:
    """Relative pose of ``b`` seen from ``a``: ``inverse(a) (+) b``."""
    return compose(inverse(a), b)


def transform_point(frame: Pose2, p: Point2) -> Point2:
    """Map ``p`` from ``frame``'s body coordinates to the outer frame."""
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    return Point2(frame.x + c * p.x - s * p.y, frame.y + s * p.x + c * p.y)


def inverse_transform_point(frame: Pose2, p: Point2) -> Point2:
    """Express outer-frame point ``p`` in ``frame``'s body coordinates."""
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    dx, dy = p.x - frame.x, p.y - frame.y
    return Point2(c * dx + s * dy, -s * dx + c * dy)


def transform_points(frame: Pose2, pts: np.ndarray) -> np.ndarray:
    """Vectorised :func:`transform_point` for an ``(N, 2)`` array."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    rot = np.array([[c, -s], [s, c]])
    return pts @ rot.T + np.array([frame.x, frame.y])
