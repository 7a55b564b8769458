"""Range-and-bearing sensing, virtual stigmergy and barriers.

Every robot owns a replica of a key-value tuple space. Writes bump the
per-key version; replicas exchange entries with their neighbors once per
tick and keep, per key, the entry with the higher version, ties going to
the lower writer id.
"""

import copy
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Set, Tuple, Union

import networkx as nx
import numpy as np

from .geometry import Vec2, pairwise_distances, wrap_angle
from .world import WorldState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NeighborInfo:
    """Range and bearing of a neighbor in the observer's frame."""

    id: int
    range: float
    bearing: float

    @property
    def vector(self) -> Vec2:
        return Vec2.polar(self.range, self.bearing)


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean Gaussian noise on range and bearing."""

    range_sigma: float = 0.0
    bearing_sigma: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.range_sigma == 0.0 and self.bearing_sigma == 0.0


def neighbor_table(
    world: WorldState,
    d_c: float,
    noise: Optional[NoiseModel] = None,
    rng: Optional[np.random.Generator] = None,
) -> Dict[int, List[NeighborInfo]]:
    """Neighbor lists for every robot; visibility uses the true distance."""
    ids = world.robot_ids
    table: Dict[int, List[NeighborInfo]] = {i: [] for i in ids}
    if len(ids) < 2:
        return table
    positions = world.positions
    distances = pairwise_distances(positions)
    noisy = noise is not None and not noise.is_zero
    if noisy and rng is None:
        rng = np.random.default_rng(world.rng_seed + world.tick)
    for a, b in np.argwhere(distances <= d_c):
        if a == b:
            continue
        delta = positions[b] - positions[a]
        rng_value = float(distances[a, b])
        bearing = math.atan2(delta[1], delta[0])
        if noisy:
            rng_value = max(0.0, rng_value + rng.normal(0.0, noise.range_sigma))
            bearing = wrap_angle(bearing + rng.normal(0.0, noise.bearing_sigma))
        table[ids[a]].append(NeighborInfo(ids[b], rng_value, wrap_angle(bearing)))
    return table


def neighbor_snapshot(
    world: WorldState,
    robot_id: int,
    d_c: float,
    noise: Optional[NoiseModel] = None,
    rng: Optional[np.random.Generator] = None,
) -> List[NeighborInfo]:
    """Robots within d_C of the given robot, with range and bearing.

    Raises:
        UnknownRobot: If the robot id is not in the world
    """
    world.robot(robot_id)
    return neighbor_table(world, d_c, noise, rng)[robot_id]


def communication_graph(world: WorldState, d_c: float) -> nx.Graph:
    """Undirected disk graph over robot ids."""
    graph = nx.Graph()
    graph.add_nodes_from(world.robot_ids)
    if len(world.robots) > 1:
        distances = pairwise_distances(world.positions)
        ids = world.robot_ids
        for a, b in np.argwhere(np.triu(distances <= d_c, k=1)):
            graph.add_edge(ids[a], ids[b])
    return graph


def hop_diameter(graph: nx.Graph) -> int:
    """Largest hop diameter over the connected components."""
    if graph.number_of_nodes() == 0:
        return 0
    return max(nx.diameter(graph.subgraph(c)) for c in nx.connected_components(graph))


@dataclass(frozen=True)
class StigmergyEntry:
    """A versioned tuple-space value."""

    key: str
    value: Any
    version: int
    writer_id: int

    def dominates(self, other: Optional["StigmergyEntry"]) -> bool:
        """Higher version wins; equal versions go to the lower writer id."""
        if other is None:
            return True
        return (self.version, -self.writer_id) > (other.version, -other.writer_id)


class VirtualStigmergy:
    """One robot's replica of the shared tuple space."""

    def __init__(self, owner_id: int):
        self.owner_id = owner_id
        self._entries: Dict[str, StigmergyEntry] = {}
        self._dirty: Set[str] = set()

    def put(self, key: str, value: Any) -> StigmergyEntry:
        """Write locally with the next version and queue the entry for gossip."""
        current = self._entries.get(key)
        entry = StigmergyEntry(key, value, 1 if current is None else current.version + 1, self.owner_id)
        self._entries[key] = entry
        self._dirty.add(key)
        return entry

    def get(self, key: str, default: Any = None) -> Any:
        entry = self._entries.get(key)
        return default if entry is None else entry.value

    def entry(self, key: str) -> Optional[StigmergyEntry]:
        return self._entries.get(key)

    def merge(self, entry: StigmergyEntry) -> bool:
        """Keep the received entry if it dominates the local one."""
        if entry.dominates(self._entries.get(entry.key)):
            self._entries[entry.key] = entry
            self._dirty.add(entry.key)
            return True
        return False

    def items(self, prefix: str = "") -> List[Tuple[str, Any]]:
        return [(k, e.value) for k, e in self._entries.items() if k.startswith(prefix)]

    def count(self, prefix: str) -> int:
        return sum(1 for k in self._entries if k.startswith(prefix))

    def outgoing(self, full: bool = False) -> List[StigmergyEntry]:
        """Entries to send this round; clears the pending set."""
        keys = list(self._entries) if full else sorted(self._dirty)
        self._dirty.clear()
        return [self._entries[k] for k in keys]

    def snapshot(self) -> Dict[str, StigmergyEntry]:
        return dict(self._entries)

    def copy(self) -> "VirtualStigmergy":
        return copy.deepcopy(self)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries


def vs_put(replica: VirtualStigmergy, key: str, value: Any) -> StigmergyEntry:
    return replica.put(key, value)


def vs_get(replica: VirtualStigmergy, key: str) -> Any:
    return replica.get(key)


Adjacency = Union[nx.Graph, Mapping[int, Iterable[int]]]


def _neighbors(graph: Adjacency, node: int) -> Iterable[int]:
    if isinstance(graph, nx.Graph):
        return graph.neighbors(node) if node in graph else ()
    return graph.get(node, ())


def vs_propagate(
    replicas: Mapping[int, VirtualStigmergy],
    graph: Adjacency,
    full: bool = False,
    drop_probability: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Mapping[int, VirtualStigmergy]:
    """Run one synchronous gossip round over the neighbor graph.

    Every replica sends its pending entries (all entries when ``full``)
    to its neighbors; messages are computed before any delivery so an
    entry travels one hop per round.
    """
    outboxes = {node: replica.outgoing(full) for node, replica in replicas.items()}
    if drop_probability > 0.0 and rng is None:
        rng = np.random.default_rng(0)
    for sender in sorted(outboxes):
        messages = outboxes[sender]
        if not messages:
            continue
        for receiver in sorted(_neighbors(graph, sender)):
            if receiver not in replicas or receiver == sender:
                continue
            if drop_probability > 0.0 and rng.random() < drop_probability:
                continue
            target = replicas[receiver]
            for entry in messages:
                target.merge(entry)
    return replicas


class BarrierResult(str, Enum):
    PASS = "pass"
    WAIT = "wait"


@dataclass
class Barrier:
    """Registrations known for one synchronization point."""

    barrier_id: str
    quorum_fraction: float
    registered: Set[int] = field(default_factory=set)

    def required(self, population: int) -> int:
        return quorum_count(self.quorum_fraction, population)

    def passes(self, population: int) -> bool:
        return len(self.registered) >= self.required(population)


def quorum_count(quorum: float, population: int) -> int:
    """ceil(quorum * population), robust to float noise such as 0.9*10."""
    return max(1, math.ceil(quorum * population - 1e-9))


def barrier_key(barrier_id: str, robot_id: Optional[int] = None) -> str:
    prefix = f"barrier/{barrier_id}/"
    return prefix if robot_id is None else f"{prefix}{robot_id}"


def barrier_register(replica: VirtualStigmergy, barrier_id: str) -> None:
    replica.put(barrier_key(barrier_id, replica.owner_id), True)


def barrier_view(replica: VirtualStigmergy, barrier_id: str, quorum: float) -> Barrier:
    prefix = barrier_key(barrier_id)
    registered = {int(k[len(prefix):]) for k, _ in replica.items(prefix)}
    return Barrier(barrier_id, quorum, registered)


def barrier_step(
    replica: VirtualStigmergy, barrier_id: str, swarm_size: int, quorum: float
) -> BarrierResult:
    """PASS once the locally known registrations reach the quorum."""
    view = barrier_view(replica, barrier_id, quorum)
    return BarrierResult.PASS if view.passes(swarm_size) else BarrierResult.WAIT
