"""Post-caging control: formation, contact, pushing and rotating laws.

A caged robot walks through the waypoint sequence with a small state
machine. Every waypoint ends in a barrier; robots share their positions
while registering, and on PASS rebuild their centroid estimate, their
offset from it and their formation references.
"""

import logging
import math
import statistics
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .caging import obstacle_vector
from .comms import BarrierResult, VirtualStigmergy, barrier_key, barrier_step, quorum_count
from .exceptions import (
    DegenerateLeverArm,
    FormationLost,
    InsufficientContributors,
    LostContact,
    StalledRun,
    ZeroForce,
)
from .geometry import ZERO, ArcPoint, Vec2, angle_between, wrap_angle
from .models import PushingGains, ScenarioConfig, TransportPath
from .world import ProximityScan

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FormationReference:
    """Range and bearing to a cage neighbor recorded when the cage was set."""

    neighbor_id: int
    distance: float
    bearing: float

    @property
    def vector(self) -> Vec2:
        return Vec2.polar(self.distance, self.bearing)


def formation_references(
    neighbors: Sequence, spacing: float, factor: float, members: Optional[set] = None
) -> List[FormationReference]:
    """Keep the neighbors within factor * I_d as the formation set N_f."""
    limit = factor * spacing
    return [
        FormationReference(n.id, n.range, n.bearing)
        for n in sorted(neighbors, key=lambda n: n.id)
        if n.range <= limit and (members is None or n.id in members)
    ]


def _literal_term(ref: FormationReference, d_cur: float, theta_cur: float) -> Vec2:
    theta_i = ref.bearing if abs(ref.bearing) > 1e-9 else 1e-9
    ratio = (ref.bearing - theta_cur) / theta_i
    scale = (ref.distance - d_cur) / ref.distance
    return Vec2(
        ref.distance * math.cos(ref.bearing) - math.cos(ratio),
        ref.distance * math.sin(ref.bearing) - math.sin(ratio),
    ) * scale


def formation_command(
    refs: Sequence[FormationReference],
    current: Sequence,
    gain: float,
    literal: bool = False,
    rotation: float = 0.0,
) -> Vec2:
    """Lattice-style formation term summed over the visible references.

    Each term is K_f/d_i times the current-minus-desired neighbor
    displacement, so a robot closes in on a neighbor that drifted away.
    ``rotation`` turns every reference bearing, which keeps the shape
    while the cage rotates. ``literal`` switches to the range/bearing
    ratio term.

    Raises:
        FormationLost: If no reference neighbor is visible
    """
    seen = {n.id: n for n in current}
    total = ZERO
    matched = 0
    for ref in refs:
        now = seen.get(ref.neighbor_id)
        if now is None:
            continue
        matched += 1
        if literal:
            total = total + _literal_term(ref, now.range, now.bearing) * gain
            continue
        desired = Vec2.polar(ref.distance, ref.bearing + rotation)
        actual = Vec2.polar(now.range, now.bearing)
        total = total + (actual - desired) * (gain / ref.distance)
    if matched == 0:
        raise FormationLost("No formation neighbor in range")
    return total


def is_effective_pusher(x_o: Vec2, to_target: Vec2, theta_p: float) -> bool:
    """Angle between the object direction and the target direction below theta_p."""
    if to_target.norm() == 0.0 or x_o.norm() == 0.0:
        return False
    return angle_between(x_o, to_target) < theta_p


def contact_command_push(x_o: Vec2, to_target: Vec2, gains: PushingGains) -> Vec2:
    """Hold contact with the strong gain on the effective side.

    Raises:
        LostContact: If the obstacle vector is zero
    """
    if x_o.norm() == 0.0:
        raise LostContact("Object not sensed while pushing")
    effective = is_effective_pusher(x_o, to_target, gains.effective_angle)
    gain = gains.contact_gain_effective if effective else gains.contact_gain_ineffective
    return x_o.normalized() * gain


def contact_command_rotate(x_o: Vec2, gain: float) -> Vec2:
    """K_cr * x_o / |x_o|.

    Raises:
        LostContact: If the obstacle vector is zero
    """
    if x_o.norm() == 0.0:
        raise LostContact("Object not sensed while rotating")
    return x_o.normalized() * gain


def push_command(position: Vec2, local_target: Vec2, tolerance: float, gain: float) -> Vec2:
    offset = local_target - position
    if offset.norm() <= tolerance:
        return ZERO
    return offset.normalized() * gain


def rotate_command(
    position: Vec2, centroid: Vec2, yaw_error: float, tolerance: float, gain: float
) -> Vec2:
    """Tangential command about the estimated centroid, signed by the yaw error.

    Raises:
        DegenerateLeverArm: If the robot sits on the estimated centroid
    """
    arm = position - centroid
    if arm.norm() == 0.0:
        raise DegenerateLeverArm("Robot position equals the centroid estimate")
    if abs(yaw_error) < tolerance:
        return ZERO
    tangent = arm.normalized().perp()
    return tangent * gain if yaw_error > 0 else -tangent * gain


class TransportStage(str, Enum):
    PUSH = "push"
    ROTATE = "rotate"
    BARRIER_WAIT = "barrier_wait"
    DONE = "done"


@dataclass(frozen=True)
class TransportPhase:
    stage: TransportStage
    waypoint_index: int = 0
    barrier: Optional[str] = None

    def __str__(self) -> str:
        if self.stage is TransportStage.BARRIER_WAIT:
            return f"{self.stage.value}({self.barrier})"
        return f"{self.stage.value}({self.waypoint_index})"


def combine(
    phase: Union[TransportPhase, TransportStage],
    u_t: Vec2 = ZERO,
    u_r: Vec2 = ZERO,
    u_f: Vec2 = ZERO,
    u_cp: Vec2 = ZERO,
    u_cr: Vec2 = ZERO,
    limit: Optional[float] = None,
) -> Vec2:
    """u_t + u_f + u_cp while pushing, u_r + u_f + u_cr while rotating."""
    stage = phase.stage if isinstance(phase, TransportPhase) else phase
    if stage is TransportStage.PUSH:
        total = u_t + u_f + u_cp
    elif stage is TransportStage.ROTATE:
        total = u_r + u_f + u_cr
    else:
        raise ValueError(f"No control law for stage {stage.value}")
    return total.clamped(limit) if limit is not None else total


@dataclass(frozen=True)
class CentroidEstimate:
    centroid: Vec2
    contributor_count: int
    tick_computed: int = 0


def estimate_centroid(
    positions: Union[Mapping[int, Vec2], Sequence[Tuple[int, Vec2]]],
    quorum: int = 1,
    tick: int = 0,
) -> CentroidEstimate:
    """Mean of the shared cage positions, summed in robot-id order.

    Raises:
        InsufficientContributors: If fewer than ``quorum`` positions are known
    """
    items = positions.items() if isinstance(positions, Mapping) else positions
    ordered = sorted(items, key=lambda item: item[0])
    if len(ordered) < max(quorum, 1):
        raise InsufficientContributors(len(ordered), max(quorum, 1))
    points = np.array([[p.x, p.y] for _, p in ordered], dtype=float)
    mean = points.mean(axis=0)
    return CentroidEstimate(Vec2(float(mean[0]), float(mean[1])), len(ordered), tick)


def resultant_force_oracle(
    arc: Sequence[ArcPoint],
    target: Optional[Vec2] = None,
    theta_p: Optional[float] = None,
) -> Vec2:
    """Integrate unit inward push directions along an ordered contact arc.

    Quadrature weights come from the arclength spacing of the full arc.
    With a target and theta_p only points whose inward normal is within
    theta_p of the direction to the target contribute.

    Raises:
        ZeroForce: If no point contributes
    """
    if not arc:
        raise ZeroForce("Empty contact arc")
    s = np.array([p.arclength for p in arc], dtype=float)
    weights = np.zeros(len(arc))
    if len(arc) > 1:
        gaps = np.diff(s)
        weights[:-1] += gaps / 2.0
        weights[1:] += gaps / 2.0
    else:
        weights[0] = 1.0
    total = ZERO
    used = 0
    for point, weight in zip(arc, weights):
        if target is not None and theta_p is not None:
            if not is_effective_pusher(point.inward_normal, target - point.position, theta_p):
                continue
        total = total + point.inward_normal * float(weight)
        used += 1
    if used == 0:
        raise ZeroForce("No arc point is an effective pushing position")
    return total


@dataclass(frozen=True)
class TransportSnapshot:
    """Sensing and bookkeeping a caged robot sees on one tick."""

    robot_id: int
    position: Vec2
    scan: ProximityScan
    neighbors: Sequence
    population: int
    tick: int = 0


@dataclass
class TransportMemory:
    """Per-robot transport state carried across ticks."""

    phase: TransportPhase = field(
        default_factory=lambda: TransportPhase(TransportStage.BARRIER_WAIT, 0, "wp/0")
    )
    references: List[FormationReference] = field(default_factory=list)
    estimate: Optional[CentroidEstimate] = None
    offset: Vec2 = ZERO
    yaw_origin: float = 0.0
    rotation: float = 0.0
    reference_rotation: float = 0.0
    waiting_since: Optional[int] = None
    members: Optional[set] = None
    spacing: Optional[float] = None

    @property
    def yaw_estimate(self) -> float:
        return self.yaw_origin + self.rotation


def position_key(barrier: str, robot_id: Optional[int] = None) -> str:
    prefix = f"pos/{barrier}/"
    return prefix if robot_id is None else f"{prefix}{robot_id}"


def yaw_key(barrier: str, robot_id: Optional[int] = None) -> str:
    prefix = f"yaw/{barrier}/"
    return prefix if robot_id is None else f"{prefix}{robot_id}"


def _rotation_about(memory: TransportMemory, position: Vec2) -> float:
    """Estimated turn of the cage since the last refresh."""
    if memory.estimate is None:
        return 0.0
    arm = position - memory.estimate.centroid
    if arm.norm() == 0.0 or memory.offset.norm() == 0.0:
        return 0.0
    return wrap_angle(arm.angle() - memory.offset.angle())


def _register(replica: VirtualStigmergy, barrier: str, memory: TransportMemory, position: Vec2) -> None:
    key = barrier_key(barrier, replica.owner_id)
    if key in replica:
        return
    replica.put(position_key(barrier, replica.owner_id), (position.x, position.y))
    replica.put(yaw_key(barrier, replica.owner_id), memory.yaw_estimate)
    replica.put(key, True)


def _refresh(
    memory: TransportMemory,
    snapshot: TransportSnapshot,
    replica: VirtualStigmergy,
    barrier: str,
    quorum: int,
    config: ScenarioConfig,
) -> None:
    prefix = position_key(barrier)
    shared = {int(k[len(prefix):]): Vec2.of(v) for k, v in replica.items(prefix)}
    memory.estimate = estimate_centroid(shared, quorum, snapshot.tick)
    memory.offset = snapshot.position - memory.estimate.centroid
    yaws = [v for _, v in replica.items(yaw_key(barrier))]
    if yaws:
        memory.rotation = statistics.median(yaws) - memory.yaw_origin
    memory.reference_rotation = memory.rotation
    refs = formation_references(
        snapshot.neighbors,
        memory.spacing or config.caging.spacing,
        config.pushing.neighbor_factor,
        memory.members,
    )
    if refs:
        memory.references = refs


def _needs_rotation(memory: TransportMemory, target_yaw: float, tolerance: float) -> bool:
    return abs(wrap_angle(target_yaw - memory.yaw_estimate)) >= tolerance


def _formation(memory: TransportMemory, snapshot: TransportSnapshot, gain: float, literal: bool) -> Vec2:
    if not memory.references:
        return ZERO
    try:
        return formation_command(
            memory.references,
            snapshot.neighbors,
            gain,
            literal=literal,
            rotation=memory.rotation - memory.reference_rotation,
        )
    except FormationLost:
        logger.debug("Robot %d lost its formation neighbors", snapshot.robot_id)
        return ZERO


def _recover_contact(memory: TransportMemory, snapshot: TransportSnapshot, gain: float) -> Vec2:
    if memory.estimate is None:
        return ZERO
    return (memory.estimate.centroid - snapshot.position).normalized() * gain


def transport_fsm_step(
    memory: TransportMemory,
    snapshot: TransportSnapshot,
    path: TransportPath,
    replica: VirtualStigmergy,
    config: ScenarioConfig,
) -> Tuple[TransportPhase, Vec2]:
    """Advance one robot through PUSH, BARRIER_WAIT and ROTATE.

    Waypoint 0 is the starting pose: its barrier only shares positions.
    The command is returned in gain units, clamped to the speed limit.

    Raises:
        StalledRun: If a barrier waits longer than ``barrier_timeout_ticks``
    """
    pushing, rotating = config.pushing, config.rotating
    limit = config.world.max_speed / config.world.velocity_scale
    phase = memory.phase
    x_o = obstacle_vector(snapshot.scan.object_readings)

    if phase.stage is TransportStage.DONE:
        return phase, ZERO

    if phase.stage is TransportStage.BARRIER_WAIT:
        _register(replica, phase.barrier, memory, snapshot.position)
        if memory.waiting_since is None:
            memory.waiting_since = snapshot.tick
        quorum_fraction = rotating.barrier if phase.barrier.startswith("rot/") else pushing.barrier
        passed = barrier_step(replica, phase.barrier, snapshot.population, quorum_fraction)
        if passed is BarrierResult.PASS:
            needed = quorum_count(quorum_fraction, snapshot.population)
            try:
                _refresh(memory, snapshot, replica, phase.barrier, needed, config)
            except InsufficientContributors as exc:
                # registrations arrived ahead of the positions they announce
                logger.debug("Robot %d keeps waiting at %s: %s", snapshot.robot_id, phase.barrier, exc)
                passed = BarrierResult.WAIT
        if passed is BarrierResult.PASS:
            memory.waiting_since = None
            phase = _after_barrier(memory, phase, path, rotating.orientation_tolerance)
            memory.phase = phase
            logger.debug("Robot %d passed barrier, now %s", snapshot.robot_id, phase)
        elif snapshot.tick - memory.waiting_since > config.barrier_timeout_ticks:
            raise StalledRun(f"barrier {phase.barrier} starved", tick=snapshot.tick)
        else:
            hold = _hold_contact(x_o, pushing)
            u_f = _formation(memory, snapshot, pushing.formation_gain, pushing.formation_literal)
            return phase, (hold + u_f).clamped(limit)

    if phase.stage is TransportStage.PUSH:
        waypoint = path[phase.waypoint_index]
        local_target = waypoint.point + memory.offset
        u_t = push_command(snapshot.position, local_target, pushing.tolerance, pushing.target_gain)
        if u_t.norm() == 0.0:
            memory.phase = TransportPhase(
                TransportStage.BARRIER_WAIT, phase.waypoint_index, f"wp/{phase.waypoint_index}"
            )
            return memory.phase, _hold_contact(x_o, pushing).clamped(limit)
        try:
            u_cp = contact_command_push(x_o, local_target - snapshot.position, pushing)
        except LostContact:
            u_cp = _recover_contact(memory, snapshot, pushing.contact_gain_ineffective)
        u_f = _formation(memory, snapshot, pushing.formation_gain, pushing.formation_literal)
        return phase, combine(phase, u_t=u_t, u_f=u_f, u_cp=u_cp, limit=limit)

    if phase.stage is TransportStage.ROTATE:
        waypoint = path[phase.waypoint_index]
        memory.rotation = memory.reference_rotation + _rotation_about(memory, snapshot.position)
        yaw_error = wrap_angle(waypoint.yaw - memory.yaw_estimate)
        try:
            u_r = rotate_command(
                snapshot.position,
                memory.estimate.centroid,
                yaw_error,
                rotating.orientation_tolerance,
                rotating.torque_gain,
            )
        except DegenerateLeverArm:
            u_r = ZERO
        if u_r.norm() == 0.0:
            memory.phase = TransportPhase(
                TransportStage.BARRIER_WAIT, phase.waypoint_index, f"rot/{phase.waypoint_index}"
            )
            return memory.phase, _hold_contact(x_o, pushing).clamped(limit)
        try:
            u_cr = contact_command_rotate(x_o, rotating.contact_gain)
        except LostContact:
            u_cr = _recover_contact(memory, snapshot, rotating.contact_gain)
        u_f = _formation(memory, snapshot, rotating.formation_gain, pushing.formation_literal)
        return phase, combine(phase, u_r=u_r, u_f=u_f, u_cr=u_cr, limit=limit)

    return memory.phase, ZERO


def _hold_contact(x_o: Vec2, gains: PushingGains) -> Vec2:
    if x_o.norm() == 0.0:
        return ZERO
    return x_o.normalized() * gains.contact_gain_ineffective


def _after_barrier(
    memory: TransportMemory, phase: TransportPhase, path: TransportPath, tolerance: float
) -> TransportPhase:
    index = phase.waypoint_index
    if phase.barrier.startswith("wp/") and _needs_rotation(memory, path[index].yaw, tolerance):
        return TransportPhase(TransportStage.ROTATE, index)
    if index + 1 >= len(path):
        return TransportPhase(TransportStage.DONE, index)
    return TransportPhase(TransportStage.PUSH, index + 1)


def effective_rotator(x_o: Vec2, u_r: Vec2) -> bool:
    """Rotate command with a positive component into the object."""
    return x_o.norm() > 0.0 and u_r.dot(x_o) > 0.0


def rotation_needed_at(path: TransportPath, tolerance: float) -> List[int]:
    """Waypoint indices whose yaw differs from the previous one."""
    return [
        k
        for k in range(1, len(path))
        if abs(wrap_angle(path[k].yaw - path[k - 1].yaw)) >= tolerance
    ]
