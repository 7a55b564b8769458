"""Motion primitives for reaching caging targets.

Commands are returned in gain units; the robot controller multiplies them
by the configured velocity scale before they reach the world.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Union

from .exceptions import LostContact, NoNeighbor
from .geometry import ZERO, Vec2
from .models import Branch, CagingGains, CagingTask
from .world import SENSOR_ANGLES, ProximityScan

logger = logging.getLogger(__name__)

_UNIT_SENSORS = [Vec2(math.cos(a), math.sin(a)) for a in SENSOR_ANGLES]


class CagingPhase(str, Enum):
    APPROACH = "approach"
    ORBIT = "orbit"
    ATTACHED = "attached"


@dataclass(frozen=True)
class NeighborView:
    """A neighbor as seen by the robot: relative vector plus cage membership."""

    id: int
    vector: Vec2
    branch: Optional[Branch] = None

    @property
    def range(self) -> float:
        return self.vector.norm()


@dataclass(frozen=True)
class EdgeFollowState:
    target_task: CagingTask
    phase: CagingPhase = CagingPhase.APPROACH
    nearest_neighbor: Optional[NeighborView] = None
    settled_ticks: int = 0
    reported: bool = False


@dataclass(frozen=True)
class CagingSnapshot:
    """Everything a robot senses or remembers for one caging tick."""

    robot_id: int
    position: Vec2
    scan: ProximityScan
    neighbors: Sequence[NeighborView]
    spacing: float
    robot_radius: float = 0.07
    sensor_range: float = 1.0
    comm_range: float = 1.0


@dataclass(frozen=True)
class CagingStep:
    command: Vec2
    state: EdgeFollowState
    report_attached: bool = False


def edge_follow_command(
    x_n: Vec2, spacing: float, normalized: bool = False, counter_clockwise: bool = False
) -> Vec2:
    """Orbit the neighbor at x_n while regulating the range to I_d.

    Returns perp(x_n) + (|x_n| - I_d) * x_n, which circles the neighbor
    clockwise; ``counter_clockwise`` flips the tangential term.

    Raises:
        NoNeighbor: If x_n is the zero vector
    """
    distance = x_n.norm()
    if distance == 0.0:
        raise NoNeighbor("Edge following needs a visible neighbor")
    tangential = x_n.perp()
    if counter_clockwise:
        tangential = -tangential
    radial = x_n * (distance - spacing)
    if normalized:
        radial = radial / distance
    return tangential + radial


def obstacle_vector(readings: Union[ProximityScan, Sequence[float]]) -> Vec2:
    """Mean of the per-sensor vectors reading_i * (cos phi_i, sin phi_i)."""
    values = readings.readings if isinstance(readings, ProximityScan) else readings
    total = ZERO
    for value, unit in zip(values, _UNIT_SENSORS):
        if value:
            total = total + unit * value
    return total / len(_UNIT_SENSORS)


def distance_correction_command(x_o: Vec2, toward: Optional[Vec2] = None) -> Vec2:
    """Slide along the object surface: perp(x_o), signed towards ``toward``.

    Raises:
        LostContact: If the obstacle vector vanished
    """
    if x_o.norm() == 0.0:
        raise LostContact("Obstacle vector is zero while attached")
    slide = x_o.perp()
    if toward is not None and slide.dot(toward) < 0.0:
        slide = -slide
    return slide


def surface_distance(scan: ProximityScan, robot_radius: float, sensor_range: float) -> float:
    """Robot-center distance to the object implied by the strongest reading."""
    return robot_radius + (1.0 - scan.max_object_reading) * sensor_range


def _branch_sign(branch: Branch) -> float:
    return -1.0 if branch is Branch.RIGHT else 1.0


def robot_readings(scan: ProximityScan) -> List[float]:
    """Readings whose nearest hit is another robot rather than the object."""
    return [r if r > o + 1e-12 else 0.0 for r, o in zip(scan.readings, scan.object_readings)]


def _approach(snapshot: CagingSnapshot, target: Vec2, gains: CagingGains) -> Vec2:
    heading = (target - snapshot.position).normalized()
    x_o = obstacle_vector(robot_readings(snapshot.scan))
    command = heading - x_o * gains.avoidance_gain
    ahead = x_o.normalized().dot(heading)
    if x_o.norm() > 0.05 and ahead > 0.5:
        # blocked straight ahead: veer right around the obstacle
        command = command - heading.perp() * ahead
    return command.normalized() * gains.target_gain


def _slide_along_surface(snapshot: CagingSnapshot, target: Vec2, gains: CagingGains) -> Vec2:
    x_o = obstacle_vector(snapshot.scan.object_readings)
    inward = x_o.normalized()
    slide = distance_correction_command(x_o, target - snapshot.position).normalized()
    error = surface_distance(snapshot.scan, snapshot.robot_radius, snapshot.sensor_range) - gains.standoff
    return (slide + inward * (gains.standoff_gain * error)) * gains.target_gain


def _attached_command(
    snapshot: CagingSnapshot, state: EdgeFollowState, gains: CagingGains
) -> CagingStep:
    x_o = obstacle_vector(snapshot.scan.object_readings)
    if x_o.norm() == 0.0:
        raise LostContact("No object reading while attached")
    inward = x_o.normalized()
    error = surface_distance(snapshot.scan, snapshot.robot_radius, snapshot.sensor_range) - gains.standoff
    hold = inward * (gains.standoff_gain * error) if abs(error) > gains.tolerance / 2 else ZERO

    task = state.target_task
    parent = None
    if task.parent_robot is not None:
        parent = next((n for n in snapshot.neighbors if n.id == task.parent_robot), None)

    if task.branch is Branch.SEED:
        spacing_ok, slide = True, ZERO
    elif parent is None:
        # parent out of range: creep towards the approximate target
        spacing_ok = False
        slide = distance_correction_command(x_o, task.target - snapshot.position).normalized()
    else:
        gap = parent.range - snapshot.spacing
        spacing_ok = abs(gap) <= gains.tolerance
        if spacing_ok:
            slide = ZERO
        else:
            toward = parent.vector if gap > 0 else -parent.vector
            strength = min(1.0, 2.0 * abs(gap) / snapshot.spacing)
            slide = distance_correction_command(x_o, toward).normalized() * max(strength, 0.2)

    settled = state.settled_ticks + 1 if spacing_ok else 0
    report = not state.reported and settled >= gains.attach_debounce_ticks
    new_state = replace(
        state,
        phase=CagingPhase.ATTACHED,
        settled_ticks=settled,
        reported=state.reported or report,
    )
    return CagingStep((slide + hold) * gains.target_gain, new_state, report)


def caging_controller_step(
    snapshot: CagingSnapshot, state: EdgeFollowState, gains: CagingGains
) -> CagingStep:
    """One tick of the navigate, orbit, attach and correct sequence.

    APPROACH heads for the approximate target until a cage robot comes
    within communication range. ORBIT then edge-follows the nearest cage
    robot in the branch direction. ATTACHED slides along
    the surface until the range to the branch parent is I_d +- d_tol for
    ``attach_debounce_ticks`` consecutive ticks, then reports.
    """
    task = state.target_task
    target = task.target
    touching = snapshot.scan.max_object_reading >= gains.prox_threshold

    if state.phase is CagingPhase.ATTACHED:
        try:
            return _attached_command(snapshot, state, gains)
        except LostContact:
            logger.debug("Robot %d lost contact, re-approaching", snapshot.robot_id)
            state = replace(state, phase=CagingPhase.APPROACH, settled_ticks=0)

    to_target = target - snapshot.position
    near_target = task.branch is Branch.SEED or to_target.norm() <= 0.6 * snapshot.spacing
    if touching and near_target:
        return _attached_command(snapshot, replace(state, phase=CagingPhase.ATTACHED), gains)

    cage = [n for n in snapshot.neighbors if n.branch is not None]
    nearest = min(cage, key=lambda n: n.range) if cage else None
    phase = state.phase
    if task.branch is not Branch.SEED and nearest is not None:
        if phase is CagingPhase.APPROACH and nearest.range <= snapshot.comm_range:
            phase = CagingPhase.ORBIT
    elif phase is CagingPhase.ORBIT:
        phase = CagingPhase.APPROACH

    if touching and phase is not CagingPhase.ORBIT:
        new_state = replace(state, phase=phase, nearest_neighbor=nearest)
        return CagingStep(_slide_along_surface(snapshot, target, gains), new_state)

    if phase is CagingPhase.ORBIT and nearest is not None:
        try:
            orbit = edge_follow_command(
                nearest.vector,
                snapshot.spacing,
                normalized=gains.edge_follow_normalized,
                counter_clockwise=_branch_sign(task.branch) > 0,
            )
        except NoNeighbor:
            phase = CagingPhase.APPROACH
        else:
            new_state = replace(state, phase=phase, nearest_neighbor=nearest)
            return CagingStep(orbit * (gains.edge_follow_gain * gains.target_gain), new_state)

    new_state = replace(state, phase=phase, nearest_neighbor=nearest)
    return CagingStep(_approach(snapshot, target, gains), new_state)


def rally_command(
    position: Vec2,
    scan: ProximityScan,
    active: Sequence[NeighborView],
    object_hint: Vec2,
    hold_range: float,
    gains: CagingGains,
) -> Vec2:
    """Keep an idle robot within radio range of the robots already at work.

    The robot holds once a working robot is within ``hold_range``. Near the
    object it circles at the edge of sensor range, towards the working
    robot when one is visible; otherwise it heads for the nearest working
    robot, or for ``object_hint`` when none is in sight.
    """
    nearest = min(active, key=lambda n: n.range) if active else None
    if nearest is not None and nearest.range <= hold_range:
        return ZERO
    if scan.max_object_reading > 0.0:
        inward = obstacle_vector(scan.object_readings).normalized()
        tangent = -inward.perp()
        if nearest is not None and tangent.dot(nearest.vector) < 0.0:
            tangent = -tangent
        error = scan.max_object_reading - gains.rally_reading
        heading = tangent - inward * (gains.standoff_gain * error)
    elif nearest is not None:
        heading = nearest.vector.normalized()
    else:
        heading = (object_hint - position).normalized()
    command = heading.normalized() - obstacle_vector(robot_readings(scan)) * gains.avoidance_gain
    return command.normalized() * gains.rally_gain


def neighbor_views(
    neighbors: Sequence, cage_branches: Dict[int, Branch]
) -> List[NeighborView]:
    """Attach known cage membership to raw range-and-bearing readings."""
    return [NeighborView(n.id, n.vector, cage_branches.get(n.id)) for n in neighbors]
