"""Discrete-time physical world.

Robots are velocity-controlled point masses with a disc footprint. The
object is a rigid convex polygon with quasi-static dynamics: its linear
and angular velocities relax towards F/(m*c) and tau/(I*c) where c is the
damping rate, so the steady-state velocity is proportional to the
applied force.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from .exceptions import PlacementFailure, UnknownRobot
from .geometry import (
    ZERO,
    ArcPoint,
    ConvexPolygon,
    Vec2,
    closest_boundary_point,
    pairwise_distances,
    ray_disc_distances,
    sensor_directions,
)
from .models import ScenarioConfig, WorldParams

logger = logging.getLogger(__name__)

SENSOR_COUNT = 8
SENSOR_DIRECTIONS = sensor_directions(SENSOR_COUNT)
SENSOR_ANGLES = tuple(2.0 * math.pi * k / SENSOR_COUNT for k in range(SENSOR_COUNT))


@dataclass(frozen=True)
class RobotBody:
    """A robot disc with its commanded velocity."""

    id: int
    position: Vec2
    velocity: Vec2 = ZERO
    radius: float = 0.07
    max_speed: float = 0.3


@dataclass(frozen=True)
class ObjectBody:
    """Rigid object: body-frame polygon plus pose and first-order dynamics."""

    polygon: ConvexPolygon
    position: Vec2
    yaw: float
    mass: float
    moment: float
    linear_damping: float
    angular_damping: float
    velocity: Vec2 = ZERO
    angular_velocity: float = 0.0

    @cached_property
    def shape(self) -> ConvexPolygon:
        """The polygon in the world frame."""
        return self.polygon.transformed(self.position, self.yaw)

    def kinetic_energy(self) -> float:
        speed = self.velocity.norm()
        return 0.5 * self.mass * speed * speed + 0.5 * self.moment * self.angular_velocity ** 2


@dataclass(frozen=True)
class ProximityScan:
    """Eight normalized readings at angles k*pi/4.

    ``readings`` uses the nearest hit among the object and other robots;
    ``object_readings`` only looks at the object.
    """

    readings: Tuple[float, ...]
    object_readings: Tuple[float, ...] = field(default=(0.0,) * SENSOR_COUNT)

    @property
    def max_reading(self) -> float:
        return max(self.readings)

    @property
    def max_object_reading(self) -> float:
        return max(self.object_readings)


@dataclass(frozen=True)
class WorldState:
    """Full simulation state at one tick."""

    tick: int
    dt: float
    robots: Tuple[RobotBody, ...]
    object: ObjectBody
    rng_seed: int
    params: WorldParams = field(default_factory=WorldParams)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        ids = [r.id for r in self.robots]
        if len(set(ids)) != len(ids):
            raise ValueError("robot ids must be unique")

    @cached_property
    def _index(self) -> Dict[int, int]:
        return {robot.id: i for i, robot in enumerate(self.robots)}

    def robot(self, robot_id: int) -> RobotBody:
        try:
            return self.robots[self._index[robot_id]]
        except KeyError:
            raise UnknownRobot(robot_id)

    @property
    def robot_ids(self) -> List[int]:
        return [r.id for r in self.robots]

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([[r.position.x, r.position.y] for r in self.robots], dtype=float).reshape(
            -1, 2
        )

    @property
    def time(self) -> float:
        return self.tick * self.dt

    def to_record(self, contacts: Optional[List[int]] = None) -> dict:
        """One line of the per-tick state dump."""
        record = {
            "tick": self.tick,
            "object": {
                "x": self.object.position.x,
                "y": self.object.position.y,
                "yaw": self.object.yaw,
            },
            "robots": [[r.id, r.position.x, r.position.y] for r in self.robots],
        }
        if contacts is not None:
            record["contacts"] = contacts
        return record


def make_object(config: ScenarioConfig) -> ObjectBody:
    polygon = config.object.polygon()
    mass = config.object.total_mass()
    return ObjectBody(
        polygon=polygon,
        position=Vec2.of(config.object.position),
        yaw=config.object.yaw,
        mass=mass,
        moment=mass * polygon.polar_moment_per_area(),
        linear_damping=config.world.linear_damping,
        angular_damping=config.world.angular_damping,
    )


def spawn_scenario(config: ScenarioConfig, seed: int) -> WorldState:
    """Place the object and a disc-shaped deployment cluster of robots.

    Raises:
        PlacementFailure: If the cluster cannot hold the robots at the spacing
    """
    rng = np.random.default_rng(seed)
    obj = make_object(config)
    params = config.world
    cluster = config.cluster
    reach = obj.polygon.circumradius((0.0, 0.0))
    offset = max(cluster.offset, reach + cluster.radius + cluster.clearance + params.robot_radius)
    center = obj.position + Vec2.polar(offset, math.radians(cluster.direction_deg))
    separation = max(cluster.spacing, 2.0 * params.robot_radius)

    placed: List[np.ndarray] = []
    attempts = 0
    max_attempts = 2000 * config.robot_count
    while len(placed) < config.robot_count and attempts < max_attempts:
        attempts += 1
        r = (cluster.radius - params.robot_radius) * math.sqrt(rng.random())
        theta = 2.0 * math.pi * rng.random()
        candidate = center.as_array() + r * np.array([math.cos(theta), math.sin(theta)])
        if placed:
            gaps = np.hypot(*(np.array(placed) - candidate).T)
            if np.min(gaps) < separation:
                continue
        placed.append(candidate)
    if len(placed) < config.robot_count:
        raise PlacementFailure(config.robot_count, len(placed))

    robots = tuple(
        RobotBody(
            id=i,
            position=Vec2.of(p),
            radius=params.robot_radius,
            max_speed=params.max_speed,
        )
        for i, p in enumerate(placed)
    )
    logger.debug("Spawned %d robots around %s (seed %d)", len(robots), center, seed)
    return WorldState(tick=0, dt=config.dt, robots=robots, object=obj, rng_seed=seed, params=params)


def proximity_scan(world: WorldState, robot_id: int) -> ProximityScan:
    """Read the eight proximity sensors of a robot.

    Each reading is max(0, 1 - d/range) where d is the distance from the
    robot rim to the nearest hit along the sensor ray.

    Raises:
        UnknownRobot: If the robot id is not in the world
    """
    robot = world.robot(robot_id)
    sensing_range = world.params.sensor_range
    object_hits = world.object.shape.ray_distances(robot.position, SENSOR_DIRECTIONS)
    others = world.positions[[i for i, r in enumerate(world.robots) if r.id != robot_id]]
    robot_hits = ray_disc_distances(robot.position, SENSOR_DIRECTIONS, others, robot.radius)

    def to_readings(hits: np.ndarray) -> Tuple[float, ...]:
        gaps = np.maximum(hits - robot.radius, 0.0)
        values = np.clip(1.0 - gaps / sensing_range, 0.0, 1.0)
        return tuple(float(v) for v in values)

    return ProximityScan(
        readings=to_readings(np.minimum(object_hits, robot_hits)),
        object_readings=to_readings(object_hits),
    )


def contact_set(world: WorldState) -> List[Tuple[int, ArcPoint]]:
    """Robots whose disc is within contact_epsilon of the object boundary."""
    shape = world.object.shape
    limit = world.params.contact_epsilon
    gaps = shape.distances(world.positions) if world.robots else np.zeros(0)
    contacts = []
    for robot, gap in zip(world.robots, gaps):
        if gap - robot.radius <= limit and not shape.contains(robot.position, strict=True):
            contacts.append((robot.id, closest_boundary_point(shape, robot.position)))
    return contacts


def integrate_object(obj: ObjectBody, force: Vec2, torque: float, dt: float) -> ObjectBody:
    """Advance the damped first-order object dynamics exactly over dt."""
    decay = math.exp(-obj.linear_damping * dt)
    v_ss = force / (obj.mass * obj.linear_damping)
    velocity = v_ss + (obj.velocity - v_ss) * decay
    displacement = v_ss * dt + (obj.velocity - v_ss) * ((1.0 - decay) / obj.linear_damping)

    spin_decay = math.exp(-obj.angular_damping * dt)
    w_ss = torque / (obj.moment * obj.angular_damping)
    angular_velocity = w_ss + (obj.angular_velocity - w_ss) * spin_decay
    turn = w_ss * dt + (obj.angular_velocity - w_ss) * (1.0 - spin_decay) / obj.angular_damping

    return replace(
        obj,
        position=obj.position + displacement,
        yaw=obj.yaw + turn,
        velocity=velocity,
        angular_velocity=angular_velocity,
    )


def contact_wrench(
    world: WorldState, commands: Mapping[int, Vec2]
) -> Tuple[Vec2, float, Dict[int, float]]:
    """Net force, torque and per-robot force magnitude from pushing robots."""
    params = world.params
    force, torque = ZERO, 0.0
    per_robot: Dict[int, float] = {}
    for robot_id, arc in contact_set(world):
        command = commands.get(robot_id, ZERO).clamped(world.robot(robot_id).max_speed)
        push = command.dot(arc.inward_normal)
        if push <= 0.0:
            continue
        magnitude = min(params.force_gain * push, params.per_robot_force_max)
        f = arc.inward_normal * magnitude
        force = force + f
        torque += (arc.position - world.object.position).cross(f)
        per_robot[robot_id] = magnitude
    return force, torque, per_robot


def _separate_robots(
    positions: np.ndarray, speeds: np.ndarray, radius: float, passes: int = 3
) -> np.ndarray:
    """Push overlapping discs apart; the faster robot of a pair yields more."""
    n = len(positions)
    if n < 2:
        return positions
    minimum = 2.0 * radius
    for _ in range(passes):
        distances = pairwise_distances(positions)
        np.fill_diagonal(distances, np.inf)
        overlapping = np.argwhere(np.triu(distances < minimum))
        if len(overlapping) == 0:
            break
        for i, j in overlapping:
            delta = positions[i] - positions[j]
            gap = float(np.hypot(*delta))
            if gap < 1e-12:
                delta, gap = np.array([1.0, 0.0]), 1e-12
            depth = minimum - gap
            total = speeds[i] + speeds[j]
            share_i = 0.5 if total <= 1e-12 else speeds[i] / total
            direction = delta / gap
            positions[i] = positions[i] + direction * depth * share_i
            positions[j] = positions[j] - direction * depth * (1.0 - share_i)
    return positions


def _push_out_of(shape: ConvexPolygon, point: np.ndarray, radius: float) -> np.ndarray:
    """Move a disc center so the disc does not overlap the polygon."""
    p = Vec2.of(point)
    if shape.contains(p, strict=True):
        vertices = shape.array
        edges = np.roll(vertices, -1, axis=0) - vertices
        lengths = np.hypot(edges[:, 0], edges[:, 1])
        normals = np.stack([-edges[:, 1], edges[:, 0]], axis=1) / lengths[:, None]
        depth = np.einsum("ij,ij->i", point - vertices, normals)
        k = int(np.argmin(depth))
        return point - normals[k] * (depth[k] + radius)
    arc = closest_boundary_point(shape, p)
    gap = (p - arc.position).norm()
    if gap >= radius:
        return point
    outward = (p - arc.position).normalized() if gap > 1e-12 else -arc.inward_normal
    return (arc.position + outward * radius).as_array()


def step(world: WorldState, commands: Mapping[int, Vec2]) -> WorldState:
    """Advance the world by one tick.

    Commands are clamped to each robot's max speed. Robots in contact
    transfer the inward-normal part of their command to the object.
    """
    for robot_id in commands:
        world.robot(robot_id)
    clamped = {r.id: commands.get(r.id, ZERO).clamped(r.max_speed) for r in world.robots}

    force, torque, _ = contact_wrench(world, clamped)
    obj = integrate_object(world.object, force, torque, world.dt)

    positions = world.positions.copy()
    velocities = np.array([[clamped[r.id].x, clamped[r.id].y] for r in world.robots]).reshape(-1, 2)
    positions = positions + velocities * world.dt
    speeds = np.hypot(velocities[:, 0], velocities[:, 1]) if len(velocities) else np.zeros(0)
    radius = world.robots[0].radius if world.robots else 0.0
    positions = _separate_robots(positions, speeds, radius)
    shape = obj.shape
    for i, robot in enumerate(world.robots):
        positions[i] = _push_out_of(shape, positions[i], robot.radius)

    robots = tuple(
        replace(robot, position=Vec2.of(positions[i]), velocity=clamped[robot.id])
        for i, robot in enumerate(world.robots)
    )
    return replace(world, tick=world.tick + 1, robots=robots, object=obj)
