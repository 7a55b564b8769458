"""
Tests for neighbor sensing, gossip propagation and barriers.
"""

import math

import networkx as nx
import numpy as np
import pytest

from caging_transport.comms import (
    BarrierResult,
    NoiseModel,
    StigmergyEntry,
    VirtualStigmergy,
    barrier_register,
    barrier_step,
    barrier_view,
    communication_graph,
    hop_diameter,
    neighbor_snapshot,
    quorum_count,
    vs_get,
    vs_propagate,
    vs_put,
)
from caging_transport.exceptions import UnknownRobot
from tests.test_world import make_world


def line_graph(n):
    return {i: [j for j in (i - 1, i + 1) if 0 <= j < n] for i in range(n)}


def test_neighbor_snapshot_range_and_bearing():
    world = make_world((-3.0, 0.0), (-3.0, 0.8), (-3.0, 2.5))
    neighbors = neighbor_snapshot(world, 0, d_c=1.0)
    assert [n.id for n in neighbors] == [1]
    assert neighbors[0].range == pytest.approx(0.8)
    assert neighbors[0].bearing == pytest.approx(math.pi / 2)
    assert tuple(neighbors[0].vector) == pytest.approx((0.0, 0.8))
    with pytest.raises(UnknownRobot):
        neighbor_snapshot(world, 9, d_c=1.0)


def test_neighbor_noise_is_reproducible():
    world = make_world((-3.0, 0.0), (-3.0, 0.8))
    noise = NoiseModel(0.05, 0.05)
    a = neighbor_snapshot(world, 0, 1.0, noise, np.random.default_rng(4))
    b = neighbor_snapshot(world, 0, 1.0, noise, np.random.default_rng(4))
    assert a == b
    assert a[0].range != pytest.approx(0.8, abs=1e-12)


def test_communication_graph_and_diameter():
    world = make_world((-3.0, 0.0), (-3.0, 0.8), (-3.0, 1.6), (-3.0, 5.0))
    graph = communication_graph(world, 1.0)
    assert set(graph.edges) == {(0, 1), (1, 2)}
    assert hop_diameter(graph) == 2
    assert hop_diameter(nx.Graph()) == 0


def test_put_bumps_version():
    replica = VirtualStigmergy(3)
    first = replica.put("spacing", 0.45)
    second = vs_put(replica, "spacing", 0.5)
    assert (first.version, second.version) == (1, 2)
    assert vs_get(replica, "spacing") == 0.5
    assert vs_get(replica, "missing") is None


def test_entry_dominance_breaks_ties_by_lower_writer():
    low = StigmergyEntry("k", "a", 2, writer_id=1)
    high = StigmergyEntry("k", "b", 2, writer_id=5)
    newer = StigmergyEntry("k", "c", 3, writer_id=9)
    assert low.dominates(high)
    assert not high.dominates(low)
    assert newer.dominates(low)


def test_gossip_travels_one_hop_per_round():
    replicas = {i: VirtualStigmergy(i) for i in range(4)}
    replicas[0].put("task/0", "seed")
    graph = line_graph(4)
    for expected_reach in (1, 2, 3):
        vs_propagate(replicas, graph)
        reached = [i for i in range(4) if "task/0" in replicas[i]]
        assert reached == list(range(expected_reach + 1))


def test_concurrent_writes_converge():
    replicas = {i: VirtualStigmergy(i) for i in range(3)}
    replicas[0].put("spacing", 0.45)
    replicas[2].put("spacing", 0.5)
    graph = line_graph(3)
    for _ in range(4):
        vs_propagate(replicas, graph)
    values = {r.get("spacing") for r in replicas.values()}
    assert values == {0.45}


def test_full_sync_resends_everything():
    replicas = {0: VirtualStigmergy(0), 1: VirtualStigmergy(1)}
    replicas[0].put("a", 1)
    replicas[0].outgoing()
    vs_propagate(replicas, {0: [1], 1: [0]})
    assert "a" not in replicas[1]
    vs_propagate(replicas, {0: [1], 1: [0]}, full=True)
    assert replicas[1].get("a") == 1


def test_dropped_messages_never_arrive():
    replicas = {0: VirtualStigmergy(0), 1: VirtualStigmergy(1)}
    replicas[0].put("a", 1)
    vs_propagate(replicas, {0: [1], 1: [0]}, drop_probability=0.999999, rng=np.random.default_rng(1))
    assert "a" not in replicas[1]


@pytest.mark.parametrize(
    "quorum, population, expected",
    [(0.9, 25, 23), (0.9, 10, 9), (1.0, 4, 4), (0.5, 1, 1), (0.9, 0, 1)],
)
def test_quorum_count(quorum, population, expected):
    assert quorum_count(quorum, population) == expected


def test_barrier_passes_at_quorum():
    replicas = {i: VirtualStigmergy(i) for i in range(10)}
    for i in range(8):
        barrier_register(replicas[i], "wp/1")
    graph = {i: [j for j in range(10) if j != i] for i in range(10)}
    vs_propagate(replicas, graph)
    assert barrier_step(replicas[9], "wp/1", 10, 0.9) is BarrierResult.WAIT
    barrier_register(replicas[8], "wp/1")
    vs_propagate(replicas, graph)
    assert barrier_step(replicas[9], "wp/1", 10, 0.9) is BarrierResult.PASS
    assert barrier_view(replicas[9], "wp/1", 0.9).registered == set(range(9))
