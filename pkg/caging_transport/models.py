"""Data models for the caging-transport library using Pydantic."""

import math
from enum import Enum
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .geometry import ConvexPolygon, Vec2, bounding_box, perimeter_length, polygon_centroid

DEFAULT_DENSITY = 1.39  # kg per m^2 of footprint, hollow constant-density box


class Branch(str, Enum):
    """Allocation branch of a caging task."""

    SEED = "seed"
    LEFT = "left"
    RIGHT = "right"

    @property
    def opposite(self) -> "Branch":
        if self is Branch.LEFT:
            return Branch.RIGHT
        if self is Branch.RIGHT:
            return Branch.LEFT
        return Branch.SEED


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class CagingGains(_Strict):
    """Caging column of the parameter table plus controller knobs."""

    standoff: float = Field(0.35, gt=0, description="Robot-center to surface standoff d_s (m)")
    spacing: float = Field(0.45, gt=0, description="Desired inter-robot distance I_d (m)")
    tolerance: float = Field(0.05, gt=0, description="Spacing tolerance d_tol (m)")
    termination_factor: float = Field(1.85, gt=0, description="d_T as a multiple of I_d")
    target_gain: float = Field(30.0, gt=0, description="Approach gain K_t")
    prox_threshold: float = Field(0.7, gt=0, le=1, description="Proximity attach threshold")
    edge_follow_gain: float = Field(1.0, gt=0)
    edge_follow_normalized: bool = Field(False, description="Normalize the radial edge-follow term")
    avoidance_gain: float = Field(1.0, gt=0, description="Weight of robot avoidance on approach")
    standoff_gain: float = Field(2.0, gt=0, description="Radial standoff correction while attached")
    attach_debounce_ticks: int = Field(5, ge=1)
    spacing_inflation: float = Field(1.1, gt=1.0, description="I_d growth factor when short-handed")
    inflation_settle_ticks: int = Field(150, ge=1)
    auction_ticks: Optional[int] = Field(None, ge=1, description="Override for T_a in ticks")
    auction_retries: int = Field(3, ge=1, description="Empty auctions before I_d is inflated")
    rally_gain: float = Field(10.0, ge=0, description="Idle drift speed once the seed is out (gain units)")
    rally_hold: float = Field(
        0.8, gt=0, le=1, description="Idle robots stop within this fraction of d_C of a working robot"
    )
    rally_reading: float = Field(0.05, ge=0, lt=1, description="Object reading kept while circling")

    @property
    def termination_distance(self) -> float:
        return self.termination_factor * self.spacing


class PushingGains(_Strict):
    """Pushing column of the parameter table."""

    effective_angle_deg: float = Field(115.0, gt=0, le=180, description="theta_p")
    contact_gain_effective: float = Field(40.0, gt=0, description="K_cp below theta_p")
    contact_gain_ineffective: float = Field(20.0, gt=0, description="K_cp at or above theta_p")
    tolerance: float = Field(0.1, gt=0, description="Pushing d_tol (m)")
    formation_gain: float = Field(40.0, gt=0, description="K_f while pushing")
    target_gain: float = Field(60.0, gt=0, description="K_t while pushing")
    barrier: float = Field(0.9, gt=0, le=1)
    neighbor_factor: float = Field(1.5, gt=1.0, description="k in d_i <= k*I_d for N_f")
    formation_literal: bool = Field(False, description="Use the literal range/bearing-ratio formation term")

    @property
    def effective_angle(self) -> float:
        return math.radians(self.effective_angle_deg)


class RotatingGains(_Strict):
    """Rotating column of the parameter table."""

    contact_gain: float = Field(450.0, gt=0, description="K_cr")
    orientation_tolerance_deg: float = Field(5.72, gt=0, description="Orient. tol.")
    formation_gain: float = Field(400.0, gt=0, description="K_f while rotating")
    torque_gain: float = Field(600.0, gt=0, description="K_r")
    barrier: float = Field(0.9, gt=0, le=1)

    @property
    def orientation_tolerance(self) -> float:
        return math.radians(self.orientation_tolerance_deg)


class CommsConfig(_Strict):
    """Range-and-bearing sensing and gossip settings."""

    range: float = Field(1.0, gt=0, description="Communication range d_C (m)")
    range_noise: float = Field(0.0, ge=0, description="Gaussian sigma on range (m)")
    bearing_noise: float = Field(0.0, ge=0, description="Gaussian sigma on bearing (rad)")
    drop_probability: float = Field(0.0, ge=0, lt=1)
    full_sync_interval: int = Field(10, ge=1, description="Rounds between full anti-entropy")
    barrier_population: Literal["cage", "swarm"] = "cage"


class WorldParams(_Strict):
    """Physical parameters of robots, sensors and the object."""

    robot_radius: float = Field(0.07, gt=0)
    max_speed: float = Field(0.3, gt=0, description="m/s")
    velocity_scale: float = Field(0.01, gt=0, description="Gain units to m/s")
    sensor_range: float = Field(1.0, gt=0)
    contact_epsilon: float = Field(0.02, gt=0)
    force_gain: float = Field(20.0, gt=0, description="N per m/s of inward push")
    per_robot_force_max: float = Field(6.0, gt=0, description="N")
    linear_damping: float = Field(4.0, gt=0, description="1/s")
    angular_damping: float = Field(4.0, gt=0, description="1/s")


class ObjectSpec(_Strict):
    """Shape, pose and mass of the transported object."""

    kind: Literal["rectangle", "polygon", "regular", "disc", "random", "box_rotation"] = "rectangle"
    width: float = Field(2.0, gt=0)
    height: float = Field(2.0, gt=0)
    vertices: Optional[List[Tuple[float, float]]] = None
    sides: int = Field(6, ge=3)
    radius: float = Field(1.0, gt=0)
    angle_deg: float = 30.0
    points: int = Field(12, ge=3)
    shape_seed: int = 0
    mass: Optional[float] = Field(None, gt=0)
    density: float = Field(DEFAULT_DENSITY, gt=0)
    payload: float = Field(0.0, ge=0)
    position: Tuple[float, float] = (0.0, 0.0)
    yaw: float = 0.0

    @model_validator(mode="after")
    def check_vertices(self) -> "ObjectSpec":
        if self.kind == "polygon" and not self.vertices:
            raise ValueError("object: kind 'polygon' needs vertices")
        return self

    def polygon(self) -> ConvexPolygon:
        """Body-frame polygon with its centroid at the origin."""
        if self.kind == "rectangle":
            poly = ConvexPolygon.rectangle(self.width, self.height)
        elif self.kind == "box_rotation":
            poly = ConvexPolygon.rectangle(self.width, self.height).transformed(
                (0.0, 0.0), math.radians(self.angle_deg)
            )
        elif self.kind == "regular":
            poly = ConvexPolygon.regular(self.sides, self.radius)
        elif self.kind == "disc":
            poly = ConvexPolygon.regular(max(self.sides, 48), self.radius)
        elif self.kind == "random":
            rng = np.random.default_rng(self.shape_seed)
            poly = ConvexPolygon.random(rng, self.points, self.radius)
        else:
            poly = ConvexPolygon(self.vertices or [])
        return poly.translated(-polygon_centroid(poly))

    def total_mass(self) -> float:
        if self.mass is not None:
            return self.mass + self.payload
        from .utils import mass_for_size

        width, height = bounding_box(self.polygon())
        return mass_for_size(width, height, self.density) + self.payload


class PathSpec(_Strict):
    """Benchmark path request."""

    kind: Literal["straight", "zigzag", "straight_rot"] = "straight"
    waypoint_count: int = Field(9, ge=2)
    spacing: float = Field(1.0, gt=0)
    heading_deg: float = Field(90.0, description="Direction of travel, 90 = +y")


class ClusterSpec(_Strict):
    """Deployment cluster geometry."""

    offset: float = Field(3.0, gt=0, description="Cluster center distance from the object start centroid")
    radius: float = Field(1.5, gt=0)
    spacing: float = Field(0.3, gt=0, description="Minimum robot-center separation")
    direction_deg: float = Field(180.0, description="Bearing of the cluster from the object start centroid")
    clearance: float = Field(0.3, ge=0, description="Minimum gap between cluster and object")


class ScenarioConfig(_Strict):
    """Complete, validated description of one experiment."""

    robot_count: int = Field(25, ge=1)
    object: ObjectSpec = Field(default_factory=ObjectSpec)
    caging: CagingGains = Field(default_factory=CagingGains)
    pushing: PushingGains = Field(default_factory=PushingGains)
    rotating: RotatingGains = Field(default_factory=RotatingGains)
    comms: CommsConfig = Field(default_factory=CommsConfig)
    world: WorldParams = Field(default_factory=WorldParams)
    path: PathSpec = Field(default_factory=PathSpec)
    cluster: ClusterSpec = Field(default_factory=ClusterSpec)
    dt: float = Field(0.1, gt=0)
    max_ticks: int = Field(30000, ge=1)
    barrier_timeout_ticks: int = Field(3000, ge=1)
    seeds: List[int] = Field(default_factory=lambda: [0])

    @model_validator(mode="after")
    def check_perimeter(self) -> "ScenarioConfig":
        perimeter = perimeter_length(self.object.polygon())
        if perimeter <= 3.0 * self.caging.spacing:
            raise ValueError(
                f"perimeter: object perimeter {perimeter:.3f} m must exceed "
                f"3*I_d = {3.0 * self.caging.spacing:.3f} m"
            )
        return self


class Waypoint(_Strict):
    """Desired object centroid position and yaw."""

    position: Tuple[float, float]
    yaw: float = 0.0

    @field_validator("position")
    @classmethod
    def validate_position(cls, v):
        if not all(math.isfinite(c) for c in v):
            raise ValueError("waypoint position must be finite")
        return v

    @field_validator("yaw")
    @classmethod
    def validate_yaw(cls, v):
        """Normalize yaw into [0, 2pi)."""
        if not math.isfinite(v):
            raise ValueError("waypoint yaw must be finite")
        wrapped = v % (2.0 * math.pi)
        return 0.0 if math.isclose(wrapped, 2.0 * math.pi) else wrapped

    @property
    def point(self) -> Vec2:
        return Vec2.of(self.position)


class TransportPath(_Strict):
    """Ordered waypoints the object centroid has to visit."""

    waypoints: List[Waypoint]
    kind: Optional[str] = None

    def __len__(self) -> int:
        return len(self.waypoints)

    def __iter__(self):
        return iter(self.waypoints)

    def __getitem__(self, index):
        return self.waypoints[index]


class CagingTask(BaseModel):
    """A caging target offered to the swarm."""

    model_config = ConfigDict(frozen=True)

    task_id: int = Field(..., ge=0)
    branch: Branch
    approx_target: Tuple[float, float]
    parent_robot: Optional[int] = None
    announce_tick: int = 0
    deadline: int = 0
    attempt: int = 0

    @property
    def target(self) -> Vec2:
        return Vec2.of(self.approx_target)


class Bid(BaseModel):
    """A robot's distance-based cost for a task."""

    model_config = ConfigDict(frozen=True)

    task_id: int
    robot_id: int
    value: float = Field(..., ge=0)

    def beats(self, other: Optional["Bid"]) -> bool:
        """Lower value wins; equal values go to the lower robot id."""
        if other is None:
            return True
        return (self.value, self.robot_id) < (other.value, other.robot_id)


class AttachmentRecord(BaseModel):
    """Where a robot joined the cage."""

    model_config = ConfigDict(frozen=True)

    robot_id: int
    branch: Branch
    attach_point: Tuple[float, float]
    arclength: float = 0.0
    parent_robot: Optional[int] = None
    task_id: int = 0
    tick: int = 0

    @property
    def point(self) -> Vec2:
        return Vec2.of(self.attach_point)


class WaypointRecord(BaseModel):
    """Metrics captured when the cage finishes a waypoint."""

    waypoint_index: int
    tick: int
    centroid_estimate_error: float
    position_error: float
    yaw_error: float
    effective_pushers: int
    effective_rotators: int
    rotated: bool = False


class DistanceSample(BaseModel):
    """Statistics of cage-adjacent inter-robot distances at one tick."""

    tick: int
    mean: float
    std: float


class AllocationEvent(BaseModel):
    """One row of the allocation event log."""

    tick: int
    task_id: int
    event: Literal["announced", "bid", "won", "attached", "terminated", "inflated", "timeout"]
    robot_id: int


class RunMetrics(BaseModel):
    """Outcome of a single simulated run."""

    seed: int
    success: bool = False
    caging_time: Optional[float] = None
    transport_time: Optional[float] = None
    attached_count: int = 0
    final_spacing: Optional[float] = None
    final_position_error: Optional[float] = None
    final_yaw_error: Optional[float] = None
    failure_reason: Optional[str] = None
    waypoints: List[WaypointRecord] = Field(default_factory=list)
    distances: List[DistanceSample] = Field(default_factory=list)
    trajectory: List[Tuple[float, float]] = Field(default_factory=list)
    events: List[AllocationEvent] = Field(default_factory=list)
    desired_path: List[Tuple[float, float]] = Field(default_factory=list)
    config_hash: str = ""

    def __len__(self) -> int:
        return len(self.waypoints)
