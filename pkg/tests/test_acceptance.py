"""
Scenario-level properties: force oracle, gossip consistency, barrier safety
and the end-to-end caging and transport runs.

The end-to-end runs are marked slow; deselect them with ``-m "not slow"``.
"""

import functools
import itertools
import math
import statistics

import networkx as nx
import numpy as np
import pytest
from matplotlib.path import Path as MplPath

from caging_transport.caging import obstacle_vector
from caging_transport.comms import (
    BarrierResult,
    VirtualStigmergy,
    barrier_register,
    barrier_step,
    hop_diameter,
    vs_propagate,
)
from caging_transport.config import get_preset, parse_config
from caging_transport.geometry import ArcPoint, ConvexPolygon, Vec2, chord_normal, perimeter_length
from caging_transport.models import Branch, WorldParams
from caging_transport.simulation import Simulation, run_single
from caging_transport.transport import is_effective_pusher, push_command, resultant_force_oracle
from caging_transport.world import ObjectBody, RobotBody, WorldState, proximity_scan
from caging_transport.world import step as step_world

THETA_P = math.radians(115.0)


def _disc_arc(poly, direction, samples):
    """Ordered boundary samples starting at the point facing ``direction``."""
    step = perimeter_length(poly) / samples
    best = max(range(samples), key=lambda k: poly.point_at(k * step).position.dot(direction))
    start = best * step
    arc = []
    for k in range(samples):
        point = poly.point_at(start + k * step)
        arc.append(ArcPoint(point.position, point.inward_normal, start + k * step))
    return arc, start, step


@pytest.mark.parametrize("seed", range(20))
def test_force_oracle_matches_chord_on_a_disc(seed):
    rng = np.random.default_rng(seed)
    direction = Vec2.polar(1.0, 2.0 * math.pi * rng.random())
    poly = ConvexPolygon.regular(400, 1.0)
    arc, start, step = _disc_arc(poly, direction, 100)
    target = direction * 1000.0

    force = resultant_force_oracle(arc, target=target, theta_p=THETA_P)

    effective = [
        k for k, p in enumerate(arc) if is_effective_pusher(p.inward_normal, target - p.position, THETA_P)
    ]
    assert effective == list(range(effective[0], effective[-1] + 1))
    first = poly.point_at(start + (effective[0] - 0.5) * step).position
    last = poly.point_at(start + (effective[-1] + 0.5) * step).position
    predicted = chord_normal(first, last)
    assert (force - predicted).norm() <= 0.02 * predicted.norm()


def _random_connected_graph(rng, n):
    while True:
        p = min(1.0, 2.0 * math.log(n) / n + 0.1)
        graph = nx.gnp_random_graph(n, p, seed=int(rng.integers(1 << 30)))
        if nx.is_connected(graph):
            return graph


def _gossip_trial(rng, max_nodes):
    n = int(rng.integers(2, max_nodes + 1))
    graph = _random_connected_graph(rng, n)
    replicas = {i: VirtualStigmergy(i) for i in graph.nodes}
    keys = [f"k{j}" for j in range(3)]
    expected = {}
    for key in keys:
        writers = sorted(set(int(w) for w in rng.integers(0, n, size=int(rng.integers(1, 4)))))
        for w in writers:
            replicas[w].put(key, w)
        expected[key] = writers[0]
    for _ in range(hop_diameter(graph) + 1):
        vs_propagate(replicas, graph)
    for replica in replicas.values():
        for key in keys:
            assert replica.get(key) == expected[key]
    # a second round of writes bumps the version and wins everywhere
    writer = int(rng.integers(0, n))
    replicas[writer].put(keys[0], "late")
    for _ in range(hop_diameter(graph) + 1):
        vs_propagate(replicas, graph)
    assert all(r.get(keys[0]) == "late" for r in replicas.values())


def test_gossip_converges_to_the_dominant_write():
    rng = np.random.default_rng(11)
    for _ in range(100):
        _gossip_trial(rng, max_nodes=20)


@pytest.mark.slow
def test_gossip_converges_on_large_graphs():
    rng = np.random.default_rng(12)
    for _ in range(1000):
        _gossip_trial(rng, max_nodes=50)


def test_barrier_never_passes_below_quorum():
    rng = np.random.default_rng(3)
    for _ in range(200):
        registered = int(rng.integers(0, 26))
        replica = VirtualStigmergy(99)
        others = {int(i): VirtualStigmergy(int(i)) for i in rng.permutation(25)[:registered]}
        for r in others.values():
            barrier_register(r, "wp/1")
        vs_propagate({**others, 99: replica}, {i: [99] for i in others})
        result = barrier_step(replica, "wp/1", 25, 0.9)
        assert (result is BarrierResult.PASS) == (registered >= 23)


def _square_world(*positions):
    square = ConvexPolygon.rectangle(2.0, 2.0)
    obj = ObjectBody(
        polygon=square,
        position=Vec2(0.0, 0.0),
        yaw=0.0,
        mass=5.56,
        moment=5.56 * square.polar_moment_per_area(),
        linear_damping=4.0,
        angular_damping=4.0,
    )
    robots = tuple(RobotBody(id=i, position=Vec2.of(p)) for i, p in enumerate(positions))
    return WorldState(tick=0, dt=0.1, robots=robots, object=obj, rng_seed=0, params=WorldParams())


@pytest.mark.parametrize("goal", [(4.0, 0.0), (4.0, 0.5), (5.0, -1.0)])
def test_single_effective_pusher_never_moves_the_object_away(goal):
    goal = Vec2(*goal)
    world = _square_world((-1.07, 0.0))
    offset = world.robot(0).position - world.object.position
    distances = [(world.object.position - goal).norm()]
    for _ in range(100):
        robot = world.robot(0).position
        command = push_command(robot, goal + offset, 0.05, 30.0) * world.params.velocity_scale
        world = step_world(world, {0: command})
        distances.append((world.object.position - goal).norm())
    assert all(b <= a + 1e-12 for a, b in zip(distances, distances[1:]))
    assert distances[-1] < distances[0] - 0.5


def test_effective_pusher_matches_surface_geometry():
    rng = np.random.default_rng(7)
    stations = {
        (-1.35, 0.0): Vec2(1.0, 0.0),
        (1.35, 0.0): Vec2(-1.0, 0.0),
        (0.0, -1.35): Vec2(0.0, 1.0),
        (0.0, 1.35): Vec2(0.0, -1.0),
    }
    world = _square_world(*stations)
    compared = 0
    for rid, (station, normal) in enumerate(stations.items()):
        x_o = obstacle_vector(proximity_scan(world, rid).object_readings)
        position = Vec2(*station)
        for _ in range(250):
            target = Vec2(*rng.uniform(-6.0, 6.0, size=2))
            to_target = target - position
            cosine = np.clip(normal.dot(to_target) / to_target.norm(), -1.0, 1.0)
            angle = math.degrees(math.acos(cosine))
            if abs(angle - 115.0) < 1e-6:
                continue
            assert is_effective_pusher(x_o, to_target, THETA_P) == (angle < 115.0)
            compared += 1
    assert compared > 900


# end-to-end runs


@functools.lru_cache(maxsize=None)
def _polygon_run(shape_seed):
    """Cage a random polygon; returns metrics, records at closure, I_d in use and d_T."""
    config = parse_config(
        {
            "robot_count": 30,
            "object": {"kind": "random", "shape_seed": shape_seed, "radius": 1.2},
            "path": {"kind": "straight", "waypoint_count": 2},
            "max_ticks": 12000,
        }
    )
    with Simulation(config, seed=shape_seed) as sim:
        metrics = sim.run()
    closed = [e for e in metrics.events if e.event == "terminated"]
    if not closed:
        return metrics, [], config.caging.spacing, 0.0
    spacing = sim.controllers[closed[0].robot_id].spacing
    records = [
        c.record for c in sim.controllers.values() if c.record is not None and c.record.tick <= closed[0].tick
    ]
    return metrics, records, spacing, config.caging.termination_factor * spacing


@functools.lru_cache(maxsize=None)
def _desk_run(seed):
    return run_single(get_preset("desk"), seed)


def _chain(records, branch):
    """Walk parent pointers outward from the seed."""
    by_parent = {}
    for record in records:
        if record.branch is branch:
            by_parent.setdefault(record.parent_robot, []).append(record)
    seed = next(r for r in records if r.branch is Branch.SEED)
    chain, current = [], seed.robot_id
    while current in by_parent:
        children = by_parent[current]
        assert len(children) == 1
        chain.append(children[0])
        current = children[0].robot_id
    assert len(chain) == sum(1 for r in records if r.branch is branch)
    return chain


@pytest.mark.slow
@pytest.mark.integration
@pytest.mark.parametrize("shape_seed", range(20))
def test_random_polygons_are_caged(shape_seed):
    metrics, records, _, d_t = _polygon_run(shape_seed)
    assert metrics.caging_time is not None
    assert sum(1 for e in metrics.events if e.event == "terminated") == 1

    left, right = _chain(records, Branch.LEFT), _chain(records, Branch.RIGHT)
    assert left and right
    close = [
        (l.robot_id, r.robot_id)
        for l, r in itertools.product(left, right)
        if (l.point - r.point).norm() <= d_t
    ]
    assert (left[-1].robot_id, right[-1].robot_id) in close
    assert all(l == left[-1].robot_id or r == right[-1].robot_id for l, r in close)

    seed = next(r for r in records if r.branch is Branch.SEED)
    ring = [seed.point] + [r.point for r in left] + [r.point for r in reversed(right)]
    centroid = metrics.trajectory[0]
    assert MplPath([tuple(p) for p in ring]).contains_point(centroid)


@pytest.mark.slow
@pytest.mark.integration
def test_cage_spacing_matches_the_target():
    gaps = []
    for shape_seed in range(20):
        _, records, spacing, _ = _polygon_run(shape_seed)
        assert spacing == pytest.approx(0.45)
        points = {r.robot_id: r.point for r in records}
        gaps += [
            (r.point - points[r.parent_robot]).norm()
            for r in records
            if r.parent_robot is not None and r.parent_robot in points
        ]
    assert gaps
    within = sum(1 for gap in gaps if abs(gap - 0.45) <= 0.1)
    assert within >= 0.95 * len(gaps)


@pytest.mark.slow
@pytest.mark.integration
def test_desk_transport_success_rate():
    runs = [_desk_run(seed) for seed in range(10)]
    successes = [r for r in runs if r.success]
    assert len(successes) >= 9
    assert all(r.final_position_error <= 0.15 for r in successes)


@pytest.mark.slow
@pytest.mark.integration
def test_pushing_brings_the_object_closer_each_tick():
    config = get_preset("desk")
    transient = int(round(5.0 / config.dt))
    checked = 0
    for seed in range(10):
        metrics = _desk_run(seed)
        if not metrics.success:
            continue
        start = int(round(metrics.caging_time / config.dt))
        for before, after in zip(metrics.waypoints, metrics.waypoints[1:]):
            goal = Vec2.of(metrics.desired_path[after.waypoint_index])
            ticks = range(before.tick + transient, after.tick)
            distances = [(Vec2.of(metrics.trajectory[t - start]) - goal).norm() for t in ticks]
            assert all(b <= a + 0.01 for a, b in zip(distances, distances[1:]))
            checked += len(distances)
    assert checked > 0


@pytest.mark.slow
@pytest.mark.integration
def test_rotation_path_rotates_at_third_and_sixth_waypoints():
    config = get_preset("desk_rotation")
    metrics = run_single(config, seed=0)
    assert metrics.success, metrics.failure_reason
    assert [w.waypoint_index for w in metrics.waypoints if w.rotated] == [3, 6]
    assert metrics.final_yaw_error <= 2 * config.rotating.orientation_tolerance


@pytest.mark.slow
@pytest.mark.integration
def test_caging_time_grows_with_object_size():
    small = get_preset("desk")
    large = get_preset("trend_24")
    small_times = [run_single(small, s).caging_time for s in range(5)]
    large_times = [run_single(large, s).caging_time for s in range(5)]
    assert None not in small_times and None not in large_times
    assert statistics.median(large_times) > statistics.median(small_times)
