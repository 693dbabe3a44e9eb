"""Pose graph over robot and object poses, solved with Levenberg-Marquardt."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from objloc.geometry import Pose2, wrap_angles
from objloc.posegraph.edges import DIM, KERNELS, Edge, EdgeKind, NodeId, evaluate_edge

log = logging.getLogger(__name__)

# below this many variables a dense solve beats SuperLU's setup cost
DENSE_LIMIT = 300


class DegenerateGraphError(RuntimeError):
    """The problem has a free direction no edge can pin down (e.g. no gauge anchor)."""


class _KindBlock:
    """Stacked edges of one kind in growable arrays."""

    def __init__(self, kind: EdgeKind):
        d = DIM[kind]
        self.n = 0
        self._ia = np.zeros(8, dtype=int)
        self._ib = np.zeros(8, dtype=int)
        self._meas = np.zeros((8, d))
        self._info = np.zeros((8, d, d))
        self._edge = np.zeros(8, dtype=int)

    def append(self, ia: int, ib: int, meas: np.ndarray, info: np.ndarray, edge_index: int) -> None:
        if self.n == len(self._ia):
            grow = lambda a: np.concatenate([a, np.zeros_like(a)])
            self._ia, self._ib, self._meas, self._info, self._edge = map(
                grow, (self._ia, self._ib, self._meas, self._info, self._edge)
            )
        k = self.n
        self._ia[k], self._ib[k], self._meas[k], self._info[k], self._edge[k] = ia, ib, meas, info, edge_index
        self.n += 1

    ia = property(lambda self: self._ia[: self.n])
    ib = property(lambda self: self._ib[: self.n])
    meas = property(lambda self: self._meas[: self.n])
    info = property(lambda self: self._info[: self.n])
    edge_index = property(lambda self: self._edge[: self.n])


class PoseGraph:
    def __init__(self):
        self._index: dict[NodeId, int] = {}
        self._ids: list[NodeId] = []
        self._x = np.zeros((16, 3))
        self.edges: list[Edge] = []
        self.fixed: set[NodeId] = set()
        self._blocks: dict[EdgeKind, _KindBlock] = {}

    # nodes ---------------------------------------------------------------
    def __contains__(self, node: NodeId) -> bool:
        return node in self._index

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def node_ids(self) -> list[NodeId]:
        return list(self._ids)

    @property
    def nodes(self) -> dict[NodeId, Pose2]:
        return {nid: Pose2.from_array(self._x[i]) for i, nid in enumerate(self._ids)}

    def add_node(self, node: NodeId, estimate: Pose2) -> None:
        node = NodeId(*node)
        if node in self._index:
            raise ValueError(f"duplicate node {node}")
        n = len(self._ids)
        if n == len(self._x):
            self._x = np.vstack([self._x, np.zeros_like(self._x)])
        self._x[n] = estimate.as_array()
        self._index[node] = n
        self._ids.append(node)

    def estimate(self, node: NodeId) -> Pose2:
        return Pose2.from_array(self._x[self._index[node]])

    def set_estimate(self, node: NodeId, pose: Pose2) -> None:
        self._x[self._index[node]] = pose.as_array()

    def fix(self, node: NodeId) -> None:
        if node not in self._index:
            raise KeyError(node)
        self.fixed.add(NodeId(*node))

    @property
    def state(self) -> np.ndarray:
        """``(n, 3)`` view of all estimates in insertion order."""
        return self._x[: len(self._ids)]

    def index_of(self, node: NodeId) -> int:
        return self._index[node]

    # edges ---------------------------------------------------------------
    def add_edge(self, edge: Edge) -> None:
        for nid in edge.endpoints:
            if nid not in self._index:
                raise KeyError(f"edge endpoint {nid} is not in the graph")
        ia = self._index[edge.endpoints[0]]
        ib = self._index[edge.endpoints[1]] if len(edge.endpoints) > 1 else -1
        blk = self._blocks.get(edge.kind)
        if blk is None:
            blk = self._blocks[edge.kind] = _KindBlock(edge.kind)
        blk.append(ia, ib, edge.meas_vector, edge.information, len(self.edges))
        self.edges.append(edge)

    def blocks(self) -> dict[EdgeKind, _KindBlock]:
        """Edges grouped by kind, in a fixed kind order."""
        return {k: self._blocks[k] for k in EdgeKind if k in self._blocks}


def residual(edge: Edge, graph: PoseGraph) -> np.ndarray:
    states = [graph.state[graph.index_of(n)] for n in edge.endpoints]
    return evaluate_edge(edge, states)[0]


def edge_jacobians(edge: Edge, graph: PoseGraph) -> list[np.ndarray]:
    """Analytic Jacobians of :func:`residual`, one ``(d, 3)`` block per endpoint."""
    states = [graph.state[graph.index_of(n)] for n in edge.endpoints]
    return evaluate_edge(edge, states)[1]


@dataclass(frozen=True)
class Huber:
    """Huber loss on the Mahalanobis distance ``sqrt(e' W e)``."""

    delta: float = 1.0

    def rho(self, s: np.ndarray) -> np.ndarray:
        d = self.delta
        return np.where(s <= d * d, s, 2.0 * d * np.sqrt(s) - d * d)

    def weight(self, s: np.ndarray) -> np.ndarray:
        d = self.delta
        return np.where(s <= d * d, 1.0, d / np.sqrt(np.maximum(s, 1e-300)))


def _active(block: _KindBlock, free: np.ndarray | None) -> np.ndarray | slice:
    if free is None:
        return slice(None)
    m = free[block.ia]
    has_b = block.ib >= 0
    m = m | (has_b & free[np.where(has_b, block.ib, 0)])
    return np.flatnonzero(m)


def _select(graph: PoseGraph, free: np.ndarray | None):
    """Edges touching at least one free node, grouped by kind."""
    out = []
    for kind, blk in graph.blocks().items():
        sel = _active(blk, free)
        ia = blk.ia[sel]
        if len(ia):
            out.append((kind, ia, blk.ib[sel], blk.meas[sel], blk.info[sel]))
    return out


def _evaluate(problem, x: np.ndarray, kernel: Huber | None, with_jac: bool):
    """Objective and optionally per-kind (e, Ja, Jb, W, ia, ib)."""
    total = 0.0
    parts = []
    for kind, ia, ib, meas, W in problem:
        xb = x[ib] if kind is not EdgeKind.LIDAR_DIRECTION else None
        e, Ja, Jb = KERNELS[kind](x[ia], xb, meas)
        s = np.einsum("ni,nij,nj->n", e, W, e)
        if kernel is not None:
            total += float(np.sum(kernel.rho(s)))
            W = W * kernel.weight(s)[:, None, None]
        else:
            total += float(np.sum(s))
        if with_jac:
            parts.append((e, Ja, Jb, W, ia, ib))
    return total, parts


def objective(graph: PoseGraph, kernel: Huber | None = None) -> float:
    """Sum over edges of ``e' Omega e`` at the current estimates."""
    return _evaluate(_select(graph, None), graph.state, kernel, False)[0]


def _free_mask(graph: PoseGraph, free_nodes=None) -> np.ndarray:
    n = len(graph)
    mask = np.ones(n, dtype=bool)
    if free_nodes is not None:
        mask[:] = False
        for nid in free_nodes:
            mask[graph.index_of(nid)] = True
    for nid in graph.fixed:
        mask[graph.index_of(nid)] = False
    return mask


def check_gauge(graph: PoseGraph, free: np.ndarray, problem=None) -> None:
    """Every free node must reach a held node through edges carrying information."""
    if free.all():
        raise DegenerateGraphError("no fixed node: the gauge freedom is not removed")
    if not free.any():
        return
    n = len(graph)
    anchor = n
    # held nodes all collapse onto one anchor vertex
    vertex = np.where(free, np.arange(n), anchor)
    rows, cols = [], []
    for _, ia, ib, _, info in problem if problem is not None else _select(graph, free):
        live = np.any(info != 0.0, axis=(1, 2)) & (ib >= 0)
        rows.append(vertex[ia[live]])
        cols.append(vertex[ib[live]])
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
    adj = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(n + 1, n + 1))
    _, labels = connected_components(adj, directed=False)
    floating = free & (labels[:n] != labels[anchor])
    if floating.any():
        bad = [graph.node_ids[i] for i in np.flatnonzero(floating)[:5]]
        raise DegenerateGraphError(f"nodes not anchored to any fixed node: {bad}")


def _assemble(graph: PoseGraph, parts, free: np.ndarray):
    """Gauss-Newton system ``H = J' W J``, ``g = J' W e`` over free variables."""
    col = np.full(len(graph), -1)
    col[free] = np.arange(int(free.sum()))
    nv = 3 * int(free.sum())
    g = np.zeros(nv)
    rows, cols, vals = [], [], []
    offs = np.arange(3)
    for e, Ja, Jb, W, ia, ib in parts:
        if Jb is None:
            J, c = Ja, col[ia][:, None]
        else:
            J, c = np.concatenate([Ja, Jb], axis=2), np.stack([col[ia], col[ib]], axis=1)
        # variable index per Jacobian column, -1 for held nodes
        v = np.where(c[:, :, None] >= 0, 3 * c[:, :, None] + offs, -1).reshape(len(e), -1)
        WJ = np.einsum("nkl,nlj->nkj", W, J)
        He = np.einsum("nki,nkj->nij", J, WJ)
        ge = np.einsum("nkj,nk->nj", WJ, e)
        ok = v >= 0
        g += np.bincount(v[ok], weights=ge[ok], minlength=nv)
        pair = ok[:, :, None] & ok[:, None, :]
        rows.append(np.broadcast_to(v[:, :, None], He.shape)[pair])
        cols.append(np.broadcast_to(v[:, None, :], He.shape)[pair])
        vals.append(He[pair])
    if rows:
        H = sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nv, nv)
        )
    else:
        H = sp.csc_matrix((nv, nv))
    return H, g


def linearize(graph: PoseGraph, free_nodes=None, kernel: Huber | None = None):
    """``(J' Omega J, J' Omega e)`` with fixed nodes' blocks removed.

    Columns follow graph insertion order of the free nodes, three per node.
    """
    free = _free_mask(graph, free_nodes)
    if not graph.fixed:
        raise DegenerateGraphError("no fixed node: the gauge freedom is not removed")
    problem = _select(graph, free)
    check_gauge(graph, free, problem)
    _, parts = _evaluate(problem, graph.state, kernel, True)
    return _assemble(graph, parts, free)


@dataclass
class OptimizeReport:
    iterations: int
    initial_objective: float
    final_objective: float
    converged: bool
    damping: float

    def __str__(self) -> str:
        flag = "converged" if self.converged else "NOT converged"
        return (
            f"{self.iterations} iterations, objective {self.initial_objective:.6g} -> "
            f"{self.final_objective:.6g} ({flag})"
        )


def optimize(
    graph: PoseGraph,
    max_iters: int = 100,
    convergence_tol: float = 1e-9,
    *,
    free_nodes=None,
    gradient_tol: float = 1e-10,
    initial_damping: float = 1e-4,
    kernel: Huber | None = None,
) -> OptimizeReport:
    """Levenberg-Marquardt on the graph; estimates are updated in place.

    ``free_nodes`` restricts the solve to a subset (everything else is held
    constant for this call). Damping is divided by 10 after an accepted step
    and multiplied by 10 after a rejected one; a step is only accepted if it
    does not increase the objective.
    """
    free = _free_mask(graph, free_nodes)
    if not graph.fixed:
        raise DegenerateGraphError("no fixed node: the gauge freedom is not removed")
    problem = _select(graph, free)
    check_gauge(graph, free, problem)
    x = graph.state
    lam = initial_damping
    f0, parts = _evaluate(problem, x, kernel, True)
    f = f0
    if not free.any():
        return OptimizeReport(0, f0, f0, True, lam)

    iterations = 0
    converged = False
    idx = np.flatnonzero(free)
    for _ in range(max_iters):
        if f == 0.0:
            converged = True
            break
        H, g = _assemble(graph, parts, free)
        if np.max(np.abs(g), initial=0.0) < gradient_tol:
            converged = True
            break
        dense = H.shape[0] <= DENSE_LIMIT
        if dense:
            H = H.toarray()
            eye = np.eye(H.shape[0])
        else:
            eye = sp.identity(H.shape[0], format="csc")
        accepted = False
        while lam < 1e12:
            if dense:
                try:
                    dx = np.linalg.solve(H + lam * eye, -g).reshape(-1, 3)
                except np.linalg.LinAlgError:
                    lam *= 10.0
                    continue
            else:
                dx = spsolve(H + lam * eye, -g).reshape(-1, 3)
            if not np.all(np.isfinite(dx)):
                lam *= 10.0
                continue
            trial = x.copy()
            trial[idx] += dx
            trial[idx, 2] = wrap_angles(trial[idx, 2])
            f_new, parts_new = _evaluate(problem, trial, kernel, True)
            if f_new <= f:
                accepted = True
                break
            lam *= 10.0
        iterations += 1
        if not accepted:
            # no descent direction left at machine precision
            converged = True
            break
        x[idx] = trial[idx]
        decrease = f - f_new
        f, parts = f_new, parts_new
        lam = max(lam / 10.0, 1e-12)
        if decrease <= convergence_tol * max(f + decrease, 1e-300):
            converged = True
            break
    report = OptimizeReport(iterations, f0, f, converged, lam)
    if not converged:
        log.info("optimisation stopped after %d iterations without converging", iterations)
    return report


def incremental_update(
    graph: PoseGraph,
    new_nodes=None,
    new_edges=(),
    window: int | None = None,
    max_iters: int = 20,
    convergence_tol: float = 1e-9,
    **kwargs,
) -> OptimizeReport:
    """Append nodes/edges and re-optimise.

    With ``window`` set, only nodes whose tick lies in the last ``window``
    ticks move; older nodes act as temporary anchors.
    """
    for nid, pose in (new_nodes or {}).items():
        graph.add_node(nid, pose)
    for e in new_edges:
        graph.add_edge(e)
    free_nodes = None
    if window is not None:
        latest = max(n.t for n in graph.node_ids)
        free_nodes = [n for n in graph.node_ids if n.t > latest - window]
    return optimize(graph, max_iters, convergence_tol, free_nodes=free_nodes, **kwargs)
