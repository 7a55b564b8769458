"""Single-run orchestration: allocation, caging and transport for one seed."""

import json
import logging
from pathlib import Path
from typing import IO, Dict, List, Optional, Sequence, Union

import numpy as np

from .allocation import SEED_TASK_ID, EventLog, task_key
from .comms import NoiseModel, communication_graph, hop_diameter, neighbor_table, quorum_count, vs_propagate
from .controller import RobotContext, RobotController, RobotStage
from .exceptions import ControlError, ExportError, StalledRun
from .geometry import wrap_angle
from .models import (
    Branch,
    CagingTask,
    DistanceSample,
    RunMetrics,
    ScenarioConfig,
    TransportPath,
    WaypointRecord,
)
from .transport import TransportStage
from .utils import config_hash, distance_stats, generate_path, write_events
from .world import WorldState, contact_set, proximity_scan, spawn_scenario, step

logger = logging.getLogger(__name__)

SYSTEM_ID = -1
DIAMETER_REFRESH_TICKS = 25
DISTANCE_SAMPLE_TICKS = 10


def auction_ticks(config: ScenarioConfig, world: WorldState) -> int:
    """T_a: the configured override or three times the hop diameter."""
    if config.caging.auction_ticks is not None:
        return config.caging.auction_ticks
    graph = communication_graph(world, config.comms.range)
    return max(3, 3 * hop_diameter(graph))


class Simulation:
    """
    One deterministic run of the whole pipeline.

    Use as a context manager when dumping per-tick state so the dump file
    is closed even if the run raises.
    """

    def __init__(
        self,
        config: ScenarioConfig,
        seed: int,
        dump_path: Optional[Union[str, Path]] = None,
        path: Optional[TransportPath] = None,
    ):
        """
        Initialize the simulation.

        Args:
            config: Validated scenario
            seed: Seed for placement, sensing noise and message drops
            dump_path: Optional line-delimited JSON state dump
            path: Waypoints to follow; generated from ``config.path`` if omitted
        """
        self.config = config
        self.seed = seed
        self.dump_path = Path(dump_path) if dump_path is not None else None
        self.world = spawn_scenario(config, seed)
        start = self.world.object.position
        self.path = path or generate_path(
            config.path, start=(start.x, start.y), start_yaw=self.world.object.yaw
        )
        self.controllers: Dict[int, RobotController] = {
            rid: RobotController(rid, config, plan=self.path) for rid in self.world.robot_ids
        }
        self.events = EventLog()
        self._noise = NoiseModel(config.comms.range_noise, config.comms.bearing_noise)
        self._noise_rng = np.random.default_rng([seed, 1])
        self._drop_rng = np.random.default_rng([seed, 2])
        self._dump: Optional[IO[str]] = None
        self._caging_tick: Optional[int] = None
        self._done_tick: Optional[int] = None
        self._final_spacing: Optional[float] = None
        self._attached_count = 0
        self._waypoints: Dict[int, WaypointRecord] = {}
        self._pushers: Dict[int, int] = {}
        self._rotators: Dict[int, int] = {}
        self._passed: set = set()
        self._distances: List[DistanceSample] = []
        self._trajectory: List[tuple] = []

    def __enter__(self):
        if self.dump_path is not None:
            try:
                self.dump_path.parent.mkdir(parents=True, exist_ok=True)
                self._dump = self.dump_path.open("w", encoding="utf-8")
            except OSError as e:
                raise ExportError(f"Cannot open state dump {self.dump_path}: {e}", path=str(self.dump_path))
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    def close(self):
        if self._dump is not None:
            self._dump.close()
            self._dump = None

    # bookkeeping

    def _cage_ids(self) -> List[int]:
        return sorted(
            rid
            for rid, c in self.controllers.items()
            if c.stage in (RobotStage.CAGED, RobotStage.TRANSPORT, RobotStage.DONE)
        )

    def _cage_positions(self) -> np.ndarray:
        ids = set(self._cage_ids())
        return np.array(
            [[r.position.x, r.position.y] for r in self.world.robots if r.id in ids], dtype=float
        ).reshape(-1, 2)

    def _record_events(self, tick: int, rid: int, controller: RobotController) -> None:
        for event, task_id in controller.drain_events():
            self.events.record(tick, task_id, event, rid)
            if event == "terminated" and self._caging_tick is None:
                self._caging_tick = tick
                self._attached_count = len(self._cage_ids())
                self._final_spacing, _ = distance_stats(self._cage_positions(), self.world.object.position)
                logger.info(
                    "Seed %d: caging terminated at tick %d with %d robots",
                    self.seed,
                    tick,
                    self._attached_count,
                )

    def _observe_barriers(self, tick: int, before: Dict[int, object]) -> None:
        obj = self.world.object
        for rid, controller in sorted(self.controllers.items()):
            old = before.get(rid)
            if old is None or old.stage is not TransportStage.BARRIER_WAIT:
                continue
            if controller.phase is not None and controller.phase == old:
                continue
            barrier = old.barrier
            if barrier in self._passed:
                continue
            self._passed.add(barrier)
            index = old.waypoint_index
            waypoint = self.path[index]
            estimate = controller.transport.estimate
            estimate_error = (estimate.centroid - obj.position).norm() if estimate else float("nan")
            record = WaypointRecord(
                waypoint_index=index,
                tick=tick,
                centroid_estimate_error=estimate_error,
                position_error=(obj.position - waypoint.point).norm(),
                yaw_error=abs(wrap_angle(obj.yaw - waypoint.yaw)),
                effective_pushers=self._pushers.get(index, 0),
                effective_rotators=self._rotators.get(index, 0),
                rotated=barrier.startswith("rot/"),
            )
            self._waypoints[index] = record
            logger.info("Seed %d: barrier %s passed at tick %d", self.seed, barrier, tick)

    def _count_effective(self) -> None:
        pushing: Dict[int, int] = {}
        rotating: Dict[int, int] = {}
        for controller in self.controllers.values():
            phase = controller.phase
            if phase is None:
                continue
            if controller.effective_push:
                pushing[phase.waypoint_index] = pushing.get(phase.waypoint_index, 0) + 1
            if controller.effective_rotate:
                rotating[phase.waypoint_index] = rotating.get(phase.waypoint_index, 0) + 1
        for index, count in pushing.items():
            self._pushers[index] = max(self._pushers.get(index, 0), count)
        for index, count in rotating.items():
            self._rotators[index] = max(self._rotators.get(index, 0), count)

    def _transport_finished(self) -> bool:
        members = [c for c in self.controllers.values() if c.transport is not None]
        if not members:
            return False
        done = sum(1 for c in members if c.stage is RobotStage.DONE)
        return done >= quorum_count(self.config.pushing.barrier, len(members))

    def _dump_tick(self) -> None:
        if self._dump is None:
            return
        contacts = [rid for rid, _ in contact_set(self.world)]
        self._dump.write(json.dumps(self.world.to_record(contacts), separators=(",", ":")) + "\n")

    # main loop

    def _announce_seed_task(self, deadline: int) -> None:
        start = self.world.object.position
        task = CagingTask(
            task_id=SEED_TASK_ID,
            branch=Branch.SEED,
            approx_target=(start.x, start.y),
            deadline=deadline,
        )
        for controller in self.controllers.values():
            controller.replica.put(task_key(SEED_TASK_ID), task)
        self.events.record(0, SEED_TASK_ID, "announced", SYSTEM_ID)

    def run(self) -> RunMetrics:
        """
        Run until transport is done, a barrier starves or max_ticks is hit.

        Returns:
            RunMetrics for this seed; stalled runs come back with success False
        """
        config = self.config
        swarm_size = len(self.controllers)
        t_a = auction_ticks(config, self.world)
        self._announce_seed_task(t_a)
        logger.info("Seed %d: %d robots, T_a = %d ticks", self.seed, swarm_size, t_a)

        failure: Optional[str] = None
        for tick in range(config.max_ticks):
            if tick and tick % DIAMETER_REFRESH_TICKS == 0:
                t_a = auction_ticks(config, self.world)
            neighbors = neighbor_table(self.world, config.comms.range, self._noise, self._noise_rng)
            before = {rid: c.phase for rid, c in self.controllers.items()}
            commands = {}
            try:
                for rid in sorted(self.controllers):
                    controller = self.controllers[rid]
                    scan = proximity_scan(self.world, rid) if controller.needs_scan(tick) else None
                    ctx = RobotContext(
                        tick=tick,
                        position=self.world.robot(rid).position,
                        neighbors=neighbors[rid],
                        scan=scan,
                        auction_ticks=t_a,
                        swarm_size=swarm_size,
                    )
                    commands[rid] = controller.step(ctx)
                    self._record_events(tick, rid, controller)
            except StalledRun as exc:
                failure = str(exc)
                logger.warning("Seed %d stalled at tick %d: %s", self.seed, tick, exc)
                break
            except ControlError as exc:
                failure = f"{type(exc).__name__}: {exc}"
                logger.warning("Seed %d controller error at tick %d: %s", self.seed, tick, exc)
                break

            self._count_effective()
            self._observe_barriers(tick, before)
            vs_propagate(
                {rid: c.replica for rid, c in self.controllers.items()},
                communication_graph(self.world, config.comms.range),
                full=tick % config.comms.full_sync_interval == 0,
                drop_probability=config.comms.drop_probability,
                rng=self._drop_rng,
            )
            self._dump_tick()
            if self._caging_tick is not None:
                obj = self.world.object.position
                self._trajectory.append((obj.x, obj.y))
                if tick % DISTANCE_SAMPLE_TICKS == 0:
                    mean, std = distance_stats(self._cage_positions(), obj)
                    self._distances.append(DistanceSample(tick=tick, mean=mean, std=std))
            if self._transport_finished():
                self._done_tick = tick
                break
            self.world = step(self.world, commands)
        else:
            failure = "max_ticks reached"
            logger.warning("Seed %d hit max_ticks=%d", self.seed, config.max_ticks)

        return self._metrics(failure)

    def _metrics(self, failure: Optional[str]) -> RunMetrics:
        dt = self.config.dt
        obj = self.world.object
        last = self.path[len(self.path) - 1]
        success = failure is None and self._done_tick is not None
        caging_time = self._caging_tick * dt if self._caging_tick is not None else None
        transport_time = None
        if self._done_tick is not None and self._caging_tick is not None:
            transport_time = (self._done_tick - self._caging_tick) * dt
        metrics = RunMetrics(
            seed=self.seed,
            success=success,
            caging_time=caging_time,
            transport_time=transport_time,
            attached_count=self._attached_count or len(self._cage_ids()),
            final_spacing=self._final_spacing,
            final_position_error=(obj.position - last.point).norm(),
            final_yaw_error=abs(wrap_angle(obj.yaw - last.yaw)),
            failure_reason=failure,
            waypoints=[self._waypoints[k] for k in sorted(self._waypoints)],
            distances=self._distances,
            trajectory=self._trajectory,
            events=list(self.events),
            desired_path=[wp.position for wp in self.path],
            config_hash=config_hash(self.config),
        )
        logger.info(
            "Seed %d finished: success=%s caging=%s transport=%s",
            self.seed,
            success,
            caging_time,
            transport_time,
        )
        return metrics


def run_single(
    config: ScenarioConfig,
    seed: int,
    out_dir: Optional[Union[str, Path]] = None,
    dump_state: bool = False,
) -> RunMetrics:
    """
    Run one seed and write its event file when ``out_dir`` is given.

    Args:
        config: Validated scenario
        seed: Run seed
        out_dir: Directory for per-run files
        dump_state: Also write ``state_<seed>.jsonl``

    Returns:
        RunMetrics of the run
    """
    dump_path = Path(out_dir) / f"state_{seed}.jsonl" if out_dir is not None and dump_state else None
    with Simulation(config, seed, dump_path=dump_path) as sim:
        metrics = sim.run()
    if out_dir is not None:
        write_events(metrics, out_dir)
    return metrics


def run_experiment(
    config: ScenarioConfig,
    seeds: Optional[Sequence[int]] = None,
    out_dir: Optional[Union[str, Path]] = None,
    dump_state: bool = False,
) -> List[RunMetrics]:
    """
    Run every seed sequentially; stalled runs are recorded as failures.

    Args:
        config: Validated scenario
        seeds: Seeds to run, defaults to ``config.seeds``
        out_dir: Directory for per-run files
        dump_state: Also write per-tick state dumps

    Returns:
        One RunMetrics per seed, in seed order given
    """
    seeds = list(config.seeds if seeds is None else seeds)
    return [run_single(config, seed, out_dir, dump_state) for seed in seeds]
