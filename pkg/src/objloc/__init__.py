"""Moving-object localization from odometry, UWB ranging and 2D LiDAR."""

from objloc.geometry import Point2, Pose2, angle_diff, compose, inverse, transform_point, wrap_angle

__version__ = "0.1.0"

__all__ = [
    "Point2",
    "Pose2",
    "angle_diff",
    "compose",
    "inverse",
    "transform_point",
    "wrap_angle",
]
