import dataclasses
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from oracles import brute_objective, fd_jacobians

from objloc import scenario
from objloc.geometry import Point2, Pose2, between, compose
from objloc.posegraph import (
    DegenerateGraphError,
    Edge,
    EdgeKind,
    PoseGraph,
    edge_jacobians,
    incremental_update,
    linearize,
    obj,
    objective,
    optimize,
    residual,
    robot,
)
from objloc.posegraph import io as graph_io
from objloc.pipeline import run_pipeline
from objloc.sim import SensorConfig

KINDS = list(EdgeKind)


def random_pose(rng, spread=5.0):
    return Pose2(*rng.uniform(-spread, spread, 2), rng.uniform(-math.pi, math.pi))


def random_edge(rng, kind, a: Pose2, b: Pose2, ta=0, tb=1):
    """An edge of ``kind`` whose measurement is near the truth between ``a`` and ``b``."""
    if kind is EdgeKind.ROBOT_ODOM:
        rel = between(a, b)
        m = Pose2(rel.x + rng.normal(0, 0.1), rel.y + rng.normal(0, 0.1), rel.theta + rng.normal(0, 0.1))
        return Edge(kind, (robot(ta), robot(tb)), m, _spd(rng, 3))
    if kind is EdgeKind.OBJECT_ODOM:
        rel = between(a, b)
        m = Pose2(rel.x + rng.normal(0, 0.1), rel.y, rel.theta - rng.normal(0, 0.1))
        return Edge(kind, (obj(ta), obj(tb)), m, _spd(rng, 3))
    if kind is EdgeKind.UWB_RANGE:
        d = math.hypot(b.x - a.x, b.y - a.y)
        return Edge(kind, (robot(ta), obj(tb)), d + rng.normal(0, 0.1), rng.uniform(0.5, 2))
    if kind is EdgeKind.LIDAR_POSITION:
        rel = between(a, b)
        return Edge(kind, (robot(ta), obj(tb)), Point2(rel.x + 0.05, rel.y - 0.03), _spd(rng, 2))
    return Edge(kind, (obj(tb),), b.theta + rng.normal(0, 0.1), rng.uniform(0.5, 2))


def _spd(rng, d):
    a = rng.normal(size=(d, d))
    return a @ a.T + d * np.eye(d)


def random_graph(rng, ticks=6):
    g = PoseGraph()
    rs = [random_pose(rng) for _ in range(ticks)]
    os_ = [random_pose(rng) for _ in range(ticks)]
    for t in range(ticks):
        g.add_node(robot(t), rs[t])
        g.add_node(obj(t), os_[t])
    g.fix(robot(0))
    for t in range(1, ticks):
        g.add_edge(random_edge(rng, EdgeKind.ROBOT_ODOM, rs[t - 1], rs[t], t - 1, t))
        g.add_edge(random_edge(rng, EdgeKind.OBJECT_ODOM, os_[t - 1], os_[t], t - 1, t))
    for t in range(ticks):
        for kind in (EdgeKind.UWB_RANGE, EdgeKind.LIDAR_POSITION, EdgeKind.LIDAR_DIRECTION):
            g.add_edge(random_edge(rng, kind, rs[t], os_[t], t, t))
    # move the estimates away from the measurements
    for nid in g.node_ids:
        if nid not in g.fixed:
            p = g.estimate(nid)
            g.set_estimate(nid, Pose2(p.x + rng.normal(0, 0.3), p.y + rng.normal(0, 0.3), p.theta + rng.normal(0, 0.2)))
    return g


# residual examples ------------------------------------------------------------


def _two(a: Pose2, b: Pose2, a_id=robot(0), b_id=obj(0)):
    g = PoseGraph()
    g.add_node(a_id, a)
    g.add_node(b_id, b)
    return g


def test_range_residual_three_four_five():
    g = _two(Pose2(0, 0, 0), Pose2(3, 4, 0))
    assert_allclose(residual(Edge(EdgeKind.UWB_RANGE, (robot(0), obj(0)), 5.0, 1.0), g), [0.0], atol=1e-15)


def test_position_residual_rotated_frame():
    g = _two(Pose2(0, 0, math.pi / 2), Pose2(0, 2, 0))
    e = Edge(EdgeKind.LIDAR_POSITION, (robot(0), obj(0)), Point2(2, 0), np.eye(2))
    assert_allclose(residual(e, g), [0.0, 0.0], atol=1e-15)


def test_consistent_odometry_has_zero_residual():
    a, b = Pose2(1, 2, 0.4), Pose2(2.5, 1.0, -2.9)
    g = _two(a, b, robot(0), robot(1))
    e = Edge(EdgeKind.ROBOT_ODOM, (robot(0), robot(1)), between(a, b), np.eye(3))
    assert_allclose(residual(e, g), np.zeros(3), atol=1e-12)


def test_direction_residual_wraps():
    g = _two(Pose2(0, 0, 0), Pose2(1, 1, 3.1))
    e = Edge(EdgeKind.LIDAR_DIRECTION, (obj(0),), -3.1, 1.0)
    assert_allclose(residual(e, g), [6.2 - 2 * math.pi], atol=1e-12)


def test_coincident_range_jacobian_is_finite():
    g = _two(Pose2(1, 1, 0), Pose2(1, 1, 0))
    e = Edge(EdgeKind.UWB_RANGE, (robot(0), obj(0)), 0.5, 1.0)
    assert all(np.all(np.isfinite(J)) for J in edge_jacobians(e, g))


def test_edge_validation():
    with pytest.raises(ValueError):
        Edge(EdgeKind.UWB_RANGE, (robot(0),), 1.0, 1.0)
    with pytest.raises(ValueError):
        Edge(EdgeKind.LIDAR_POSITION, (robot(0), obj(0)), Point2(0, 0), np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        Edge(EdgeKind.LIDAR_POSITION, (robot(0), obj(0)), Point2(0, 0), -np.eye(2))
    with pytest.raises(KeyError):
        PoseGraph().add_edge(Edge(EdgeKind.LIDAR_DIRECTION, (obj(0),), 0.0, 1.0))


# objective and Jacobians -----------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_objective_matches_direct_sum(seed):
    g = random_graph(np.random.default_rng(seed))
    assert objective(g) == pytest.approx(brute_objective(g.edges, g.nodes), rel=1e-12)


def jacobian_mismatch(kind, rng) -> float:
    a, b = random_pose(rng), random_pose(rng)
    edge = random_edge(rng, kind, a, b, 0, 1)
    ids = {robot(0): a, robot(1): b, obj(0): a, obj(1): b}
    g = PoseGraph()
    for nid in edge.endpoints:
        g.add_node(nid, ids[nid])
    states = [g.state[g.index_of(n)].copy() for n in edge.endpoints]
    worst = 0.0
    for Ja, Jf in zip(edge_jacobians(edge, g), fd_jacobians(edge, states)):
        worst = max(worst, np.abs(Ja - Jf).max() / max(1.0, np.abs(Jf).max()))
    return worst


@pytest.mark.parametrize("kind", KINDS, ids=[k.value for k in KINDS])
def test_jacobians_match_finite_differences(kind):
    rng = np.random.default_rng(7)
    assert max(jacobian_mismatch(kind, rng) for _ in range(100)) < 1e-5


def test_zero_residual_edge_gives_zero_gradient():
    g = _two(Pose2(0, 0, 0), Pose2(3, 4, 0.2))
    g.fix(robot(0))
    g.add_edge(Edge(EdgeKind.LIDAR_POSITION, (robot(0), obj(0)), Point2(3, 4), np.eye(2)))
    g.add_edge(Edge(EdgeKind.LIDAR_DIRECTION, (obj(0),), 0.2, 1.0))
    _, grad = linearize(g)
    assert_allclose(grad, np.zeros(3), atol=1e-15)


def _null_dim(H, tol=1e-9):
    w = np.linalg.eigvalsh(np.asarray(H.todense() if hasattr(H, "todense") else H))
    return int(np.sum(w < tol * max(1.0, w.max())))


def test_range_only_nullspace():
    g = _two(Pose2(0, 0, 0), Pose2(3, 4, 0.5))
    g.fix(robot(0))
    g.add_edge(Edge(EdgeKind.UWB_RANGE, (robot(0), obj(0)), 5.0, 1.0))
    H, _ = linearize(g)
    # only the radial direction is observed; tangent and heading are free
    assert _null_dim(H) == 2
    g.add_node(robot(1), Pose2(6, 0, 0))
    g.fix(robot(1))
    g.add_edge(Edge(EdgeKind.UWB_RANGE, (robot(1), obj(0)), 5.0, 1.0))
    H, _ = linearize(g)
    assert _null_dim(H) == 1


def test_no_fixed_node_is_degenerate():
    g = random_graph(np.random.default_rng(1))
    g.fixed.clear()
    with pytest.raises(DegenerateGraphError):
        optimize(g)


def test_floating_node_is_degenerate():
    g = _two(Pose2(0, 0, 0), Pose2(1, 0, 0))
    g.fix(robot(0))
    g.add_edge(Edge(EdgeKind.UWB_RANGE, (robot(0), obj(0)), 1.0, 0.0))
    with pytest.raises(DegenerateGraphError):
        linearize(g)


# optimisation ----------------------------------------------------------------


def test_permutation_invariance():
    rng = np.random.default_rng(3)
    g = random_graph(rng)
    h = PoseGraph()
    for nid, p in g.nodes.items():
        h.add_node(nid, p)
    h.fixed = set(g.fixed)
    for i in rng.permutation(len(g.edges)):
        h.add_edge(g.edges[i])
    assert objective(h) == pytest.approx(objective(g), rel=1e-12)
    optimize(g)
    optimize(h)
    assert objective(h) == pytest.approx(objective(g), rel=1e-9)


def test_zero_information_equals_deletion():
    rng = np.random.default_rng(5)
    g = random_graph(rng)
    h = PoseGraph()
    for nid, p in g.nodes.items():
        h.add_node(nid, p)
    h.fixed = set(g.fixed)
    for e in g.edges:
        h.add_edge(e)
    extra = Edge(EdgeKind.UWB_RANGE, (robot(2), obj(3)), 42.0, 0.0)
    g.add_edge(extra)
    optimize(g, convergence_tol=1e-15)
    optimize(h, convergence_tol=1e-15)
    assert abs(objective(g) - objective(h)) < 1e-12
    assert_allclose(g.state, h.state, atol=1e-9)


def test_lm_never_increases_objective():
    g = random_graph(np.random.default_rng(9), ticks=8)
    f = objective(g)
    for _ in range(30):
        rep = optimize(g, max_iters=1)
        assert rep.final_objective <= rep.initial_objective
        assert objective(g) <= f
        f = objective(g)


def test_already_optimal():
    a, b = Pose2(0, 0, 0), Pose2(1, 2, 0.3)
    g = _two(a, b)
    g.fix(robot(0))
    g.add_edge(Edge(EdgeKind.UWB_RANGE, (robot(0), obj(0)), math.hypot(1, 2), 1.0))
    g.add_edge(Edge(EdgeKind.LIDAR_POSITION, (robot(0), obj(0)), Point2(1, 2), np.eye(2)))
    g.add_edge(Edge(EdgeKind.LIDAR_DIRECTION, (obj(0),), 0.3, 1.0))
    rep = optimize(g)
    assert rep.iterations <= 1 and rep.final_objective == pytest.approx(0.0, abs=1e-30)


def ideal_graph(robot_truth, object_truth, perturb_rng=None):
    """Every constraint kind built from exact ground truth."""
    g = PoseGraph()
    for t, (r, o) in enumerate(zip(robot_truth, object_truth)):
        g.add_node(robot(t), r)
        g.add_node(obj(t), o)
        if t:
            g.add_edge(Edge(EdgeKind.ROBOT_ODOM, (robot(t - 1), robot(t)), between(robot_truth[t - 1], r), np.eye(3)))
            g.add_edge(Edge(EdgeKind.OBJECT_ODOM, (obj(t - 1), obj(t)), between(object_truth[t - 1], o), np.eye(3)))
        g.add_edge(Edge(EdgeKind.UWB_RANGE, (robot(t), obj(t)), math.hypot(o.x - r.x, o.y - r.y), 1.0))
        rel = between(r, o)
        g.add_edge(Edge(EdgeKind.LIDAR_POSITION, (robot(t), obj(t)), Point2(rel.x, rel.y), np.eye(2)))
        g.add_edge(Edge(EdgeKind.LIDAR_DIRECTION, (obj(t),), o.theta, 1.0))
    g.fix(robot(0))
    if perturb_rng is not None:
        for nid in g.node_ids:
            if nid not in g.fixed:
                p = g.estimate(nid)
                d = perturb_rng.normal(0, [0.2, 0.2, 0.1])
                g.set_estimate(nid, Pose2(p.x + d[0], p.y + d[1], p.theta + d[2]))
    return g


def test_noise_free_recovery():
    rng = np.random.default_rng(2)
    rt = [Pose2(0.1 * t, 0.2 * math.sin(0.3 * t), 0.1 * t) for t in range(40)]
    ot = [Pose2(3 + math.cos(0.2 * t), 1 + math.sin(0.2 * t), 0.2 * t + math.pi / 2) for t in range(40)]
    g = ideal_graph(rt, ot, rng)
    optimize(g)
    for t in range(40):
        for est, truth in ((g.estimate(robot(t)), rt[t]), (g.estimate(obj(t)), ot[t])):
            assert math.hypot(est.x - truth.x, est.y - truth.y) < 1e-6
            assert abs(math.remainder(est.theta - truth.theta, 2 * math.pi)) < 1e-6


def test_appending_odometry_only_node_keeps_optimum():
    rng = np.random.default_rng(4)
    g = random_graph(rng)
    optimize(g, convergence_tol=1e-15)
    before = g.state.copy()
    last = g.estimate(robot(5))
    step = Pose2(0.3, 0.1, 0.05)
    incremental_update(
        g,
        {robot(6): compose(last, step)},
        [Edge(EdgeKind.ROBOT_ODOM, (robot(5), robot(6)), step, np.eye(3))],
    )
    assert_allclose(g.state[: len(before)], before, atol=1e-9)


def _noisy_chain(ticks, seed):
    rng = np.random.default_rng(seed)
    rt = [Pose2(2 * math.cos(0.05 * t), 2 * math.sin(0.05 * t), 0.05 * t + math.pi / 2) for t in range(ticks)]
    ot = [Pose2(5 + 0.03 * t, 1 + math.sin(0.1 * t), 0.0) for t in range(ticks)]
    steps = []
    for t in range(1, ticks):
        dr, do = between(rt[t - 1], rt[t]), between(ot[t - 1], ot[t])
        nr = rng.normal(0, [0.01, 0.01, 0.01])
        no = rng.normal(0, [0.01, 0.01, 0.01])
        rng_m = math.hypot(ot[t].x - rt[t].x, ot[t].y - rt[t].y) + rng.normal(0, 0.05)
        steps.append((Pose2(dr.x + nr[0], dr.y + nr[1], dr.theta + nr[2]), Pose2(do.x + no[0], do.y + no[1], do.theta + no[2]), rng_m))
    return rt, ot, steps


def _run_incremental(rt, ot, steps, window, iters=50, tol=1e-12):
    g = PoseGraph()
    g.add_node(robot(0), rt[0])
    g.add_node(obj(0), ot[0])
    g.fix(robot(0))
    g.fix(obj(0))
    for t, (dr, do, r) in enumerate(steps, start=1):
        nodes = {robot(t): g.estimate(robot(t - 1)) @ dr, obj(t): g.estimate(obj(t - 1)) @ do}
        edges = [
            Edge(EdgeKind.ROBOT_ODOM, (robot(t - 1), robot(t)), dr, np.eye(3)),
            Edge(EdgeKind.OBJECT_ODOM, (obj(t - 1), obj(t)), do, np.eye(3)),
            Edge(EdgeKind.UWB_RANGE, (robot(t), obj(t)), r, 1.0),
        ]
        incremental_update(g, nodes, edges, window=window, max_iters=iters, convergence_tol=tol)
    return g


def test_batch_matches_unbounded_incremental():
    rt, ot, steps = _noisy_chain(60, 1)
    inc = _run_incremental(rt, ot, steps, None)
    # same graph, re-solved from dead reckoning in one batch
    batch = PoseGraph()
    for nid in inc.node_ids:
        batch.add_node(nid, Pose2(0, 0, 0))
    batch.fixed = set(inc.fixed)
    for e in inc.edges:
        batch.add_edge(e)
    batch.set_estimate(robot(0), rt[0])
    batch.set_estimate(obj(0), ot[0])
    for t, (dr, do, _) in enumerate(steps, start=1):
        batch.set_estimate(robot(t), batch.estimate(robot(t - 1)) @ dr)
        batch.set_estimate(obj(t), batch.estimate(obj(t - 1)) @ do)
    optimize(batch, 200, 1e-15)
    optimize(inc, 200, 1e-15)
    assert objective(inc) == pytest.approx(objective(batch), rel=1e-9)


def test_window_close_to_unbounded():
    # shipped static-robot layout, every sensor at its default noise
    sc = scenario.load("static_robot")
    log = dataclasses.replace(sc, sensors=SensorConfig(rng_seed=1)).simulate()
    win = run_pipeline(log, "full", sc.pipeline.replace(window=50))
    full = run_pipeline(log, "full", sc.pipeline.replace(window=None))
    assert log.ticks == 500
    for a, b in ((win.robot[-1], full.robot[-1]), (win.object[-1], full.object[-1])):
        assert math.hypot(a.x - b.x, a.y - b.y) < 0.02


def test_io_round_trip(tmp_path):
    g = random_graph(np.random.default_rng(6))
    text = graph_io.dumps(g)
    back = graph_io.loads(text)
    assert graph_io.dumps(back) == text
    assert objective(back) == objective(g)
    path = tmp_path / "g.txt"
    graph_io.save(g, path)
    assert graph_io.dumps(graph_io.load(path)) == text
