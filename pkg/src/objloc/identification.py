"""Find the tracked object in a LiDAR scan.

A scan is clustered with a range-adaptive linking distance, clusters that moved
since the previous scan are kept, and the UWB range picks the one that is the
object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from objloc.geometry import Point2, Pose2, inverse, transform_points
from objloc.types import PointCloud, RangeMeasurement

DEFAULT_BAND_EDGES = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)


@dataclass(frozen=True)
class Cluster:
    centroid: Point2
    members: np.ndarray = field(repr=False)
    indices: tuple[int, ...] = field(default=(), repr=False)

    @property
    def point_count(self) -> int:
        return len(self.members)

    @property
    def range(self) -> float:
        return self.centroid.norm()

    @classmethod
    def from_points(cls, pts: np.ndarray, indices=()) -> Cluster:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        c = pts.mean(axis=0)
        return cls(Point2(c[0], c[1]), pts, tuple(int(i) for i in indices))

    def transformed(self, frame: Pose2) -> Cluster:
        """The same cluster expressed through ``frame`` (body -> outer)."""
        return Cluster.from_points(transform_points(frame, self.members), self.indices)


@dataclass(frozen=True)
class ObjectDetection:
    t: int
    position: Point2
    matched_range: float
    range_gap: float


@dataclass(frozen=True)
class IdentifyParams:
    angular_resolution: float = math.radians(0.25)
    band_edges: tuple[float, ...] = DEFAULT_BAND_EDGES
    min_cluster_size: int = 3
    motion_threshold: float = 0.05
    association_radius: float = 0.5
    tolerance: float = 0.3


def link_distance(cr, angular_resolution: float):
    """Largest gap between neighbouring returns at range ``cr``: ``2 cr tan(res / 2)``."""
    return 2.0 * np.asarray(cr) * math.tan(angular_resolution / 2.0)


def band_upper_edge(r, band_edges) -> np.ndarray:
    """Upper edge of the band containing range ``r``; ranges past the last edge clamp to it."""
    edges = np.asarray(band_edges, dtype=float)
    idx = np.searchsorted(edges, np.asarray(r, dtype=float), side="left")
    idx = np.clip(idx, 1, len(edges) - 1)
    return edges[idx]


def _check_bands(band_edges) -> None:
    edges = np.asarray(band_edges, dtype=float)
    if len(edges) < 2 or edges[0] != 0.0 or np.any(np.diff(edges) <= 0):
        raise ValueError("band_edges must start at 0 and be strictly increasing")


def adaptive_cluster(
    cloud: PointCloud,
    angular_resolution: float,
    band_edges=DEFAULT_BAND_EDGES,
    min_cluster_size: int = 3,
) -> list[Cluster]:
    """Single-linkage clustering where the link distance grows with range.

    Two points link when their separation is at most the link distance of the
    band holding the nearer of the two. Small clusters are dropped; the rest
    come back sorted by centroid range.
    """
    if angular_resolution <= 0:
        raise ValueError("angular_resolution must be positive")
    _check_bands(band_edges)
    pts = cloud.points
    n = len(pts)
    if n == 0:
        return []

    ranges = np.hypot(pts[:, 0], pts[:, 1])
    max_link = float(link_distance(band_upper_edge(ranges.max(), band_edges), angular_resolution))
    pairs = cKDTree(pts).query_pairs(max_link, output_type="ndarray")
    if len(pairs):
        i, j = pairs[:, 0], pairs[:, 1]
        near = np.minimum(ranges[i], ranges[j])
        limit = link_distance(band_upper_edge(near, band_edges), angular_resolution)
        sep = np.hypot(*(pts[i] - pts[j]).T)
        keep = sep <= limit
        i, j = i[keep], j[keep]
    else:
        i = j = np.zeros(0, dtype=int)
    adj = coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
    _, labels = connected_components(adj, directed=False)

    clusters = []
    order = np.argsort(labels, kind="stable")
    bounds = np.flatnonzero(np.diff(labels[order])) + 1
    for group in np.split(order, bounds):
        if len(group) >= min_cluster_size:
            group = np.sort(group)
            clusters.append(Cluster.from_points(pts[group], group))
    clusters.sort(key=lambda c: (c.range, c.centroid.x, c.centroid.y))
    return clusters


def detect_dynamic(
    prev: list[Cluster],
    curr: list[Cluster],
    motion_threshold: float = 0.05,
    association_radius: float = 0.5,
) -> list[Cluster]:
    """Current clusters that moved since ``prev`` or have no counterpart there.

    Both lists must already be in the same frame.
    """
    if not curr:
        return []
    if not prev:
        return list(curr)
    pc = np.array([[c.centroid.x, c.centroid.y] for c in prev])
    out = []
    for c in curr:
        d = np.hypot(pc[:, 0] - c.centroid.x, pc[:, 1] - c.centroid.y)
        k = int(np.argmin(d))
        if d[k] > association_radius or d[k] >= motion_threshold:
            out.append(c)
    return out


def gate_by_uwb(
    dynamic: list[Cluster],
    range_measurement: RangeMeasurement,
    tolerance: float = 0.3,
) -> ObjectDetection | None:
    """Pick the moving cluster whose distance best matches the UWB range.

    Nothing is returned unless the best match is within ``tolerance``.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if not dynamic:
        return None
    r = range_measurement.range
    best = min(
        range(len(dynamic)),
        key=lambda k: (abs(dynamic[k].range - r), dynamic[k].range, k),
    )
    c = dynamic[best]
    gap = abs(c.range - r)
    if gap > tolerance:
        return None
    return ObjectDetection(range_measurement.t, c.centroid, r, gap)


def identify(
    prev_scan: PointCloud,
    curr_scan: PointCloud,
    range_measurement: RangeMeasurement,
    params: IdentifyParams = IdentifyParams(),
    motion: Pose2 | None = None,
) -> ObjectDetection | None:
    """Cluster both scans, keep what moved, gate by UWB range.

    ``motion`` is the sensor's displacement from the previous scan to the
    current one (previous body frame); previous clusters are re-expressed in
    the current body frame before comparison.
    """
    prev = adaptive_cluster(
        prev_scan, params.angular_resolution, params.band_edges, params.min_cluster_size
    )
    curr = adaptive_cluster(
        curr_scan, params.angular_resolution, params.band_edges, params.min_cluster_size
    )
    if motion is not None:
        back = inverse(motion)
        prev = [c.transformed(back) for c in prev]
    dynamic = detect_dynamic(prev, curr, params.motion_threshold, params.association_radius)
    return gate_by_uwb(dynamic, range_measurement, params.tolerance)


class ObjectIdentifier:
    """Streaming wrapper around :func:`identify` that clusters each scan once."""

    def __init__(self, params: IdentifyParams = IdentifyParams()):
        self.params = params
        self._prev: list[Cluster] | None = None
        self._motion = Pose2.identity()

    def add_motion(self, delta: Pose2) -> None:
        """Accumulate sensor motion reported between scans."""
        self._motion = self._motion @ delta

    def update(self, scan: PointCloud, range_measurement: RangeMeasurement | None) -> ObjectDetection | None:
        p = self.params
        curr = adaptive_cluster(scan, p.angular_resolution, p.band_edges, p.min_cluster_size)
        prev, self._prev = self._prev, curr
        motion, self._motion = self._motion, Pose2.identity()
        if prev is None or range_measurement is None:
            return None
        if motion != Pose2.identity():
            back = inverse(motion)
            prev = [c.transformed(back) for c in prev]
        dynamic = detect_dynamic(prev, curr, p.motion_threshold, p.association_radius)
        return gate_by_uwb(dynamic, range_measurement, p.tolerance)
