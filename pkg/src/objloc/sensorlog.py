"""Line-delimited text format for sensor logs.

One record per line, whitespace separated, floats written with ``repr`` so
values round-trip exactly. Records are ordered by tick, and within a tick in
the order below::

    # objloc-sensorlog 1
    CONFIG <json object of SensorConfig fields, sorted keys>
    TICKS <n>
    GT     t rx ry rtheta ox oy otheta
    ODOM_R t dx dy dtheta          (t >= 1)
    ODOM_O t dx dy dtheta          (t >= 1)
    UWB    t range los             (los is 0 or 1)
    SCAN   t n x1 y1 ... xn yn
    DET    t x y matched_range range_gap

``DET`` records (object detections) are optional and only written when
detections are passed to :func:`dumps`.
"""

from __future__ import annotations

import dataclasses
import json
from collections import defaultdict
from pathlib import Path

import numpy as np

from objloc.geometry import Pose2
from objloc.sim import ConfigurationError, SensorConfig, SensorLog
from objloc.types import OdomIncrement, PointCloud, RangeMeasurement

HEADER = "# objloc-sensorlog 1"


def _f(v) -> str:
    return repr(float(v))


def dumps(log: SensorLog, detections=None) -> str:
    cfg = json.dumps(dataclasses.asdict(log.config), sort_keys=True)
    lines = [HEADER, f"CONFIG {cfg}", f"TICKS {log.ticks}"]
    by_tick: dict[int, list[str]] = defaultdict(list)
    for t, (r, o) in enumerate(zip(log.robot_truth, log.object_truth)):
        by_tick[t].append(
            " ".join(["GT", str(t)] + [_f(v) for v in (r.x, r.y, r.theta, o.x, o.y, o.theta)])
        )
    for tag, stream in (("ODOM_R", log.robot_odom), ("ODOM_O", log.object_odom)):
        for m in stream:
            d = m.delta
            by_tick[m.t].append(f"{tag} {m.t} {_f(d.x)} {_f(d.y)} {_f(d.theta)}")
    for m in log.ranges:
        by_tick[m.t].append(f"UWB {m.t} {_f(m.range)} {int(m.los)}")
    for s in log.scans:
        coords = " ".join(_f(v) for v in s.points.ravel())
        by_tick[s.t].append(f"SCAN {s.t} {len(s)} {coords}".rstrip())
    for det in detections or ():
        by_tick[det.t].append(
            f"DET {det.t} {_f(det.position.x)} {_f(det.position.y)} "
            f"{_f(det.matched_range)} {_f(det.range_gap)}"
        )
    for t in sorted(by_tick):
        lines.extend(by_tick[t])
    return "\n".join(lines) + "\n"


def loads(text: str) -> SensorLog:
    cfg = None
    ticks = None
    gt: dict[int, tuple[Pose2, Pose2]] = {}
    log_parts = defaultdict(list)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tag, _, rest = line.partition(" ")
        try:
            if tag == "CONFIG":
                cfg = SensorConfig(**json.loads(rest))
                continue
            if tag == "TICKS":
                ticks = int(rest)
                continue
            fields = rest.split()
            t = int(fields[0])
            vals = [float(v) for v in fields[1:]]
            if tag == "GT":
                gt[t] = (Pose2(*vals[0:3]), Pose2(*vals[3:6]))
            elif tag == "ODOM_R":
                log_parts["robot_odom"].append(OdomIncrement(t, Pose2(*vals)))
            elif tag == "ODOM_O":
                log_parts["object_odom"].append(OdomIncrement(t, Pose2(*vals)))
            elif tag == "UWB":
                log_parts["ranges"].append(RangeMeasurement(t, vals[0], bool(int(vals[1]))))
            elif tag == "SCAN":
                n = int(vals[0])
                pts = np.array(vals[1:], dtype=float).reshape(-1, 2)
                if len(pts) != n:
                    raise ValueError(f"SCAN declares {n} points, has {len(pts)}")
                log_parts["scans"].append(PointCloud(t, pts))
            elif tag == "DET":
                continue
            else:
                raise ValueError(f"unknown record tag {tag!r}")
        except (ValueError, IndexError, TypeError) as exc:
            raise ConfigurationError(f"line {lineno}: {exc}") from exc
    if cfg is None or ticks is None:
        raise ConfigurationError("sensor log is missing CONFIG or TICKS")
    ordered = [gt[t] for t in sorted(gt)]
    return SensorLog(
        ticks=ticks,
        config=cfg,
        robot_truth=[g[0] for g in ordered],
        object_truth=[g[1] for g in ordered],
        **log_parts,
    )


def save(log: SensorLog, path, detections=None) -> None:
    Path(path).write_text(dumps(log, detections), encoding="utf-8")


def load(path) -> SensorLog:
    return loads(Path(path).read_text(encoding="utf-8"))
