"""Plain-text pose graph format.

One record per line, fields separated by single spaces, floats in ``repr``
form (shortest string that round-trips)::

    VERTEX <agent> <t> <x> <y> <theta>
    FIX <agent> <t>
    EDGE robot_odom      robot <t0> robot <t1>   <dx> <dy> <dtheta> <I11 I12 I13 I22 I23 I33>
    EDGE object_odom     object <t0> object <t1> <dx> <dy> <dtheta> <I11 I12 I13 I22 I23 I33>
    EDGE uwb_range       robot <t> object <t>    <range> <I11>
    EDGE lidar_position  robot <t> object <t>    <x> <y> <I11 I12 I22>
    EDGE lidar_direction object <t>              <theta> <I11>

Vertices come first in insertion order, then FIX records sorted by node,
then edges in insertion order. Information matrices are written as their
upper triangle, row by row.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from objloc.geometry import Point2, Pose2
from objloc.posegraph.edges import ARITY, DIM, Agent, Edge, EdgeKind, NodeId
from objloc.posegraph.graph import PoseGraph


def _f(v) -> str:
    return repr(float(v))


def _node(n: NodeId) -> str:
    return f"{Agent(n.agent).value} {n.t}"


def dumps(graph: PoseGraph) -> str:
    lines = []
    for nid, pose in graph.nodes.items():
        lines.append(f"VERTEX {_node(nid)} {_f(pose.x)} {_f(pose.y)} {_f(pose.theta)}")
    for nid in sorted(graph.fixed, key=lambda n: (Agent(n.agent).value, n.t)):
        lines.append(f"FIX {_node(nid)}")
    for e in graph.edges:
        ends = " ".join(_node(n) for n in e.endpoints)
        meas = " ".join(_f(v) for v in e.meas_vector)
        iu = np.triu_indices(DIM[e.kind])
        info = " ".join(_f(v) for v in e.information[iu])
        lines.append(f"EDGE {e.kind.value} {ends} {meas} {info}")
    return "\n".join(lines) + ("\n" if lines else "")


def _measurement(kind: EdgeKind, vals: list[float]):
    if kind in (EdgeKind.ROBOT_ODOM, EdgeKind.OBJECT_ODOM):
        return Pose2(*vals)
    if kind is EdgeKind.LIDAR_POSITION:
        return Point2(*vals)
    return vals[0]


def loads(text: str) -> PoseGraph:
    graph = PoseGraph()
    for lineno, raw in enumerate(text.splitlines(), 1):
        f = raw.split()
        if not f or f[0].startswith("#"):
            continue
        try:
            if f[0] == "VERTEX":
                graph.add_node(NodeId(Agent(f[1]), int(f[2])), Pose2(*map(float, f[3:6])))
            elif f[0] == "FIX":
                graph.fix(NodeId(Agent(f[1]), int(f[2])))
            elif f[0] == "EDGE":
                kind = EdgeKind(f[1])
                k = ARITY[kind]
                ends = tuple(NodeId(Agent(f[2 + 2 * i]), int(f[3 + 2 * i])) for i in range(k))
                rest = [float(v) for v in f[2 + 2 * k :]]
                d = DIM[kind]
                m = {EdgeKind.LIDAR_POSITION: 2}.get(kind, 3 if d == 3 else 1)
                iu = np.triu_indices(d)
                if len(rest) != m + len(iu[0]):
                    raise ValueError("wrong number of fields")
                info = np.zeros((d, d))
                info[iu] = rest[m:]
                info = info + np.triu(info, 1).T
                graph.add_edge(Edge(kind, ends, _measurement(kind, rest[:m]), info))
            else:
                raise ValueError(f"unknown record {f[0]!r}")
        except (ValueError, KeyError, IndexError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return graph


def save(graph: PoseGraph, path) -> None:
    Path(path).write_text(dumps(graph), encoding="utf-8")


def load(path) -> PoseGraph:
    return loads(Path(path).read_text(encoding="utf-8"))
