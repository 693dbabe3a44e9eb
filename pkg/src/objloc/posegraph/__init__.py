"""Pose graph over robot and object poses."""

from objloc.posegraph.edges import Agent, Edge, EdgeKind, NodeId, obj, robot
from objloc.posegraph.graph import (
    DegenerateGraphError,
    Huber,
    OptimizeReport,
    PoseGraph,
    edge_jacobians,
    incremental_update,
    linearize,
    objective,
    optimize,
    residual,
)

__all__ = [
    "Agent",
    "DegenerateGraphError",
    "Edge",
    "EdgeKind",
    "Huber",
    "NodeId",
    "OptimizeReport",
    "PoseGraph",
    "edge_jacobians",
    "incremental_update",
    "linearize",
    "obj",
    "objective",
    "optimize",
    "residual",
    "robot",
]
