"""Per-robot state machine tying allocation, caging and transport together.

A robot only sees its own position, its proximity scan, the range and
bearing of its neighbors and its tuple-space replica. Everything it
announces, bids or reports goes through the replica.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .allocation import (
    SEED_TASK_ID,
    attach_key,
    auction_winner,
    branch_records,
    check_termination,
    compute_bid,
    inflated_spacing,
    spawn_branch_targets,
    submit_bid,
    task_key,
)
from .caging import (
    CagingPhase,
    CagingSnapshot,
    CagingStep,
    EdgeFollowState,
    NeighborView,
    caging_controller_step,
    neighbor_views,
    obstacle_vector,
    rally_command,
)
from .comms import NeighborInfo, VirtualStigmergy
from .exceptions import ControlError, DegenerateLeverArm, NotAttached
from .geometry import ZERO, Vec2, wrap_angle
from .models import AttachmentRecord, Branch, CagingTask, ScenarioConfig, TransportPath, Waypoint
from .transport import (
    TransportMemory,
    TransportPhase,
    TransportSnapshot,
    TransportStage,
    effective_rotator,
    is_effective_pusher,
    rotate_command,
    transport_fsm_step,
)
from .world import ProximityScan

logger = logging.getLogger(__name__)

SPACING_KEY = "spacing"
INFLATED_AT_KEY = "inflated_at"
TERMINATED_KEY = "terminated"
PATH_KEY = "path"
TIP_CHECK_TICKS = 10


def state_key(robot_id: int) -> str:
    return f"state/{robot_id}"


def claim_key(task_id: int) -> str:
    return f"claim/{task_id}"


class RobotStage(str, Enum):
    IDLE = "idle"
    NAVIGATE = "navigate"
    CAGED = "caged"
    TRANSPORT = "transport"
    DONE = "done"


@dataclass(frozen=True)
class RobotContext:
    """What the world hands a robot on one tick."""

    tick: int
    position: Vec2
    neighbors: Sequence[NeighborInfo]
    scan: Optional[ProximityScan]
    auction_ticks: int
    swarm_size: int


def path_to_payload(path: TransportPath) -> List[Tuple[float, float, float]]:
    return [(wp.position[0], wp.position[1], wp.yaw) for wp in path]


def path_from_payload(payload: Sequence[Sequence[float]]) -> TransportPath:
    return TransportPath(waypoints=[Waypoint(position=(x, y), yaw=yaw) for x, y, yaw in payload])


class RobotController:
    """Decision making of a single robot.

    ``plan`` is only used if this robot becomes the seed: the seed writes
    the agreed waypoint list to the tuple space for the rest of the cage.
    """

    def __init__(
        self,
        robot_id: int,
        config: ScenarioConfig,
        replica: Optional[VirtualStigmergy] = None,
        plan: Optional[TransportPath] = None,
    ):
        self.robot_id = robot_id
        self.config = config
        self.replica = replica or VirtualStigmergy(robot_id)
        self.plan = plan
        self.stage = RobotStage.IDLE
        self.task: Optional[CagingTask] = None
        self.caging_state: Optional[EdgeFollowState] = None
        self.record: Optional[AttachmentRecord] = None
        self.pending_bid: Optional[CagingTask] = None
        self.announced: Dict[int, CagingTask] = {}
        self.transport: Optional[TransportMemory] = None
        self.path: Optional[TransportPath] = None
        self.phase: Optional[TransportPhase] = None
        self.effective_push = False
        self.effective_rotate = False
        self._events: List[Tuple[str, int]] = []
        self.replica.put(state_key(robot_id), RobotStage.IDLE.value)

    def __repr__(self) -> str:
        return f"RobotController(id={self.robot_id}, stage={self.stage.value})"

    @property
    def spacing(self) -> float:
        return self.replica.get(SPACING_KEY, self.config.caging.spacing)

    @property
    def terminated(self) -> bool:
        return self.replica.get(TERMINATED_KEY) is not None

    def needs_scan(self, tick: Optional[int] = None) -> bool:
        if self.stage is not RobotStage.IDLE:
            return True
        return tick is not None and not self.terminated and self._rally_open(tick)

    def cage_branches(self) -> Dict[int, Branch]:
        return {
            rec.robot_id: rec.branch
            for _, rec in self.replica.items("attached/")
            if rec is not None and rec.robot_id != self.robot_id
        }

    def drain_events(self) -> List[Tuple[str, int]]:
        events, self._events = self._events, []
        return events

    def step(self, ctx: RobotContext) -> Vec2:
        """Velocity command in m/s for this tick."""
        handlers = {
            RobotStage.IDLE: self._idle,
            RobotStage.NAVIGATE: self._navigate,
            RobotStage.CAGED: self._caged,
            RobotStage.TRANSPORT: self._transport,
            RobotStage.DONE: lambda _: ZERO,
        }
        self.effective_push = self.effective_rotate = False
        command = handlers[self.stage](ctx)
        return command * self.config.world.velocity_scale

    # allocation

    def _claimed(self, task: CagingTask) -> bool:
        claim = self.replica.get(claim_key(task.task_id))
        return claim is not None and claim[1] >= task.attempt

    def _open_tasks(self, tick: int) -> List[CagingTask]:
        tasks = []
        for _, task in self.replica.items("task/"):
            if task is None or tick >= task.deadline or self._claimed(task):
                continue
            tasks.append(task)
        return tasks

    def _idle(self, ctx: RobotContext) -> Vec2:
        if self.terminated:
            self.pending_bid = None
            return ZERO
        if self.pending_bid is not None:
            task = self.pending_bid
            current = self.replica.get(task_key(task.task_id))
            if current is None or current.attempt != task.attempt:
                self.pending_bid = None
            elif ctx.tick < task.deadline:
                submit_bid(self.replica, compute_bid(ctx.position, task, self.robot_id), task.attempt)
                return ZERO
            else:
                self.pending_bid = None
                winner = auction_winner(self.replica, task.task_id, task.attempt)
                if winner is not None and winner.robot_id == self.robot_id and not self._claimed(task):
                    self._claim(task)
                return ZERO

        candidates = self._open_tasks(ctx.tick)
        if candidates:
            task = min(candidates, key=lambda t: ((t.target - ctx.position).norm(), t.task_id))
            self.pending_bid = task
            if submit_bid(self.replica, compute_bid(ctx.position, task, self.robot_id), task.attempt):
                self._events.append(("bid", task.task_id))
            return ZERO
        return self._rally(ctx)

    def _rally_open(self, tick: int) -> bool:
        seed = self.replica.get(task_key(SEED_TASK_ID))
        return seed is not None and tick >= seed.deadline

    def _working(self, robot_id: int) -> bool:
        state = self.replica.get(state_key(robot_id))
        return state is not None and state != RobotStage.IDLE.value

    def _rally(self, ctx: RobotContext) -> Vec2:
        """Drift towards the working robots once the seed auction has closed."""
        if ctx.scan is None or not self._rally_open(ctx.tick):
            return ZERO
        active = [NeighborView(n.id, n.vector) for n in ctx.neighbors if self._working(n.id)]
        seed = self.replica.get(task_key(SEED_TASK_ID))
        gains = self.config.caging
        return rally_command(
            ctx.position,
            ctx.scan,
            active,
            seed.target,
            gains.rally_hold * self.config.comms.range,
            gains,
        )

    def _claim(self, task: CagingTask) -> None:
        self.task = task
        self.stage = RobotStage.NAVIGATE
        self.caging_state = EdgeFollowState(target_task=task)
        self.replica.put(claim_key(task.task_id), (self.robot_id, task.attempt))
        self.replica.put(state_key(self.robot_id), "assigned")
        self._events.append(("won", task.task_id))
        logger.debug("Robot %d claimed task %d", self.robot_id, task.task_id)

    def _abandon(self) -> Vec2:
        logger.debug("Robot %d gave up task %d", self.robot_id, self.task.task_id)
        self.task = None
        self.caging_state = None
        self.stage = RobotStage.IDLE
        self.replica.put(state_key(self.robot_id), RobotStage.IDLE.value)
        return ZERO

    def _lost_auction(self) -> bool:
        task = self.task
        claim = self.replica.get(claim_key(task.task_id))
        if claim is not None and claim[1] >= task.attempt and claim[0] != self.robot_id:
            return True
        winner = auction_winner(self.replica, task.task_id, task.attempt)
        return winner is not None and winner.robot_id != self.robot_id

    # caging

    def _caging_step(self, ctx: RobotContext) -> CagingStep:
        snapshot = CagingSnapshot(
            robot_id=self.robot_id,
            position=ctx.position,
            scan=ctx.scan,
            neighbors=neighbor_views(ctx.neighbors, self.cage_branches()),
            spacing=self.spacing,
            robot_radius=self.config.world.robot_radius,
            sensor_range=self.config.world.sensor_range,
            comm_range=self.config.comms.range,
        )
        try:
            step = caging_controller_step(snapshot, self.caging_state, self.config.caging)
        except ControlError as exc:
            logger.debug("Robot %d caging fallback: %s", self.robot_id, exc)
            return CagingStep(ZERO, self.caging_state)
        self.caging_state = step.state
        return step

    def _navigate(self, ctx: RobotContext) -> Vec2:
        if self.terminated:
            if self.caging_state.phase is CagingPhase.ATTACHED:
                self._attach(ctx)
                return ZERO
            return self._abandon()
        if self._lost_auction():
            return self._abandon()
        step = self._caging_step(ctx)
        if step.report_attached:
            self._attach(ctx)
        return step.command

    def _attach(self, ctx: RobotContext) -> None:
        task = self.task
        self.record = AttachmentRecord(
            robot_id=self.robot_id,
            branch=task.branch,
            attach_point=(ctx.position.x, ctx.position.y),
            parent_robot=task.parent_robot,
            task_id=task.task_id,
            tick=ctx.tick,
        )
        self.replica.put(attach_key(self.robot_id), self.record)
        self.replica.put(state_key(self.robot_id), "attached")
        self.stage = RobotStage.CAGED
        self._events.append(("attached", task.task_id))
        logger.debug("Robot %d attached for task %d", self.robot_id, task.task_id)
        if task.branch is Branch.SEED and self.plan is not None:
            self.replica.put(PATH_KEY, path_to_payload(self.plan))
        if self.terminated or self._check_termination(ctx):
            return
        next_id = 1 if task.branch is Branch.SEED else task.task_id + 2
        self._announce(ctx, task.branch, next_id, attempt=0)

    def _records(self) -> List[AttachmentRecord]:
        return [rec for _, rec in self.replica.items("attached/") if rec is not None]

    def _check_termination(self, ctx: RobotContext) -> bool:
        if self.task is None or self.task.branch is Branch.SEED:
            return False
        records = self._records()
        left = branch_records(records, Branch.LEFT)
        right = branch_records(records, Branch.RIGHT)
        d_t = self.config.caging.termination_factor * self.spacing
        if not check_termination(left, right, d_t):
            return False
        self.replica.put(TERMINATED_KEY, {"tick": ctx.tick, "robot": self.robot_id})
        self._events.append(("terminated", self.task.task_id))
        logger.info("Caging terminated by robot %d at tick %d", self.robot_id, ctx.tick)
        return True

    def _announce(self, ctx: RobotContext, branch: Branch, next_id: int, attempt: int) -> None:
        try:
            tasks = spawn_branch_targets(
                self.robot_id,
                ctx.position,
                ctx.scan,
                branch,
                self.spacing,
                next_id,
                tick=ctx.tick,
                threshold=self.config.caging.prox_threshold,
            )
        except NotAttached:
            logger.debug("Robot %d cannot spawn targets without contact", self.robot_id)
            return
        for task in tasks:
            task = task.model_copy(update={"deadline": ctx.tick + ctx.auction_ticks, "attempt": attempt})
            self.replica.put(task_key(task.task_id), task)
            self.announced[task.task_id] = task
            self._events.append(("announced", task.task_id))

    def _idle_known(self) -> int:
        return sum(
            1
            for key, value in self.replica.items("state/")
            if value == RobotStage.IDLE.value and key != state_key(self.robot_id)
        )

    def _inflate(self, ctx: RobotContext, task_id: int) -> None:
        last = self.replica.get(INFLATED_AT_KEY)
        if last is not None and ctx.tick - last < self.config.caging.inflation_settle_ticks:
            return
        spacing = inflated_spacing(self.spacing, self.config.caging.spacing_inflation)
        self.replica.put(SPACING_KEY, spacing)
        self.replica.put(INFLATED_AT_KEY, ctx.tick)
        self._events.append(("inflated", task_id))
        logger.debug("Robot %d inflated I_d to %.3f m", self.robot_id, spacing)

    def _monitor(self, ctx: RobotContext) -> None:
        """Re-announce tasks nobody claimed; inflate I_d when robots run out."""
        for task_id, task in sorted(self.announced.items()):
            if self.terminated:
                self.announced.clear()
                return
            if self._claimed(task):
                del self.announced[task_id]
                continue
            window = max(task.deadline - task.announce_tick, 1)
            if ctx.tick < task.deadline + window:
                continue
            self._events.append(("timeout", task_id))
            if self._check_termination(ctx):
                self.announced.clear()
                return
            attempt = task.attempt + 1
            if attempt >= self.config.caging.auction_retries and self._idle_known() == 0:
                self._inflate(ctx, task_id)
            del self.announced[task_id]
            self._announce(ctx, task.branch, task_id, attempt)
            if task_id not in self.announced:
                retry = task.model_copy(
                    update={
                        "attempt": attempt,
                        "announce_tick": ctx.tick,
                        "deadline": ctx.tick + ctx.auction_ticks,
                    }
                )
                self.replica.put(task_key(task_id), retry)
                self.announced[task_id] = retry

    def _caged(self, ctx: RobotContext) -> Vec2:
        if self.terminated:
            payload = self.replica.get(PATH_KEY)
            if payload is not None:
                self._start_transport(payload)
                return self._transport(ctx)
            return ZERO
        step = self._caging_step(ctx)
        state = self.caging_state
        moved = (ctx.position - self.record.point).norm() > self.config.caging.tolerance
        if moved and state.settled_ticks >= self.config.caging.attach_debounce_ticks:
            self.record = self.record.model_copy(
                update={"attach_point": (ctx.position.x, ctx.position.y)}
            )
            self.replica.put(attach_key(self.robot_id), self.record)
        if ctx.tick % TIP_CHECK_TICKS == 0 and self._is_tip():
            self._check_termination(ctx)
        self._monitor(ctx)
        return step.command

    def _is_tip(self) -> bool:
        if self.task is None or self.task.branch is Branch.SEED:
            return False
        chain = branch_records(self._records(), self.task.branch)
        return bool(chain) and chain[-1].robot_id == self.robot_id

    # transport

    def _start_transport(self, payload) -> None:
        self.path = path_from_payload(payload)
        members = set(self.cage_branches()) | {self.robot_id}
        self.transport = TransportMemory(
            yaw_origin=self.path[0].yaw, members=members, spacing=self.spacing
        )
        self.stage = RobotStage.TRANSPORT
        self.replica.put(state_key(self.robot_id), RobotStage.TRANSPORT.value)
        logger.debug("Robot %d starts transport with %d cage members", self.robot_id, len(members))

    def _transport(self, ctx: RobotContext) -> Vec2:
        memory = self.transport
        if self.config.comms.barrier_population == "cage":
            population = len(memory.members)
        else:
            population = ctx.swarm_size
        snapshot = TransportSnapshot(
            robot_id=self.robot_id,
            position=ctx.position,
            scan=ctx.scan,
            neighbors=ctx.neighbors,
            population=population,
            tick=ctx.tick,
        )
        phase, command = transport_fsm_step(memory, snapshot, self.path, self.replica, self.config)
        self.phase = phase
        self._classify(ctx, phase)
        if phase.stage is TransportStage.DONE:
            self.stage = RobotStage.DONE
            self.replica.put(state_key(self.robot_id), RobotStage.DONE.value)
        return command

    def _classify(self, ctx: RobotContext, phase: TransportPhase) -> None:
        memory = self.transport
        x_o = obstacle_vector(ctx.scan.object_readings)
        if phase.stage is TransportStage.PUSH:
            local_target = self.path[phase.waypoint_index].point + memory.offset
            self.effective_push = is_effective_pusher(
                x_o, local_target - ctx.position, self.config.pushing.effective_angle
            )
        elif phase.stage is TransportStage.ROTATE and memory.estimate is not None:
            yaw_error = wrap_angle(self.path[phase.waypoint_index].yaw - memory.yaw_estimate)
            try:
                u_r = rotate_command(
                    ctx.position,
                    memory.estimate.centroid,
                    yaw_error,
                    self.config.rotating.orientation_tolerance,
                    self.config.rotating.torque_gain,
                )
            except DegenerateLeverArm:
                return
            self.effective_rotate = effective_rotator(x_o, u_r)
