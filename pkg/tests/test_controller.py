"""
Tests for the per-robot allocation state machine.
"""

import math

import pytest

from caging_transport.allocation import attach_key, bid_key, task_key
from caging_transport.caging import CagingPhase, EdgeFollowState
from caging_transport.comms import NeighborInfo
from caging_transport.config import parse_config
from caging_transport.controller import (
    TERMINATED_KEY,
    RobotContext,
    RobotController,
    RobotStage,
    claim_key,
    path_from_payload,
    path_to_payload,
    state_key,
)
from caging_transport.geometry import Vec2
from caging_transport.models import AttachmentRecord, Bid, Branch, CagingTask
from caging_transport.utils import generate_path
from caging_transport.world import ProximityScan

EMPTY_SCAN = ProximityScan((0.0,) * 8, (0.0,) * 8)


def context(tick, position=(2.0, 0.0), scan=None, neighbors=()):
    return RobotContext(
        tick=tick,
        position=Vec2.of(position),
        neighbors=list(neighbors),
        scan=scan,
        auction_ticks=5,
        swarm_size=4,
    )


def seed_task(deadline=5):
    return CagingTask(task_id=0, branch=Branch.SEED, approx_target=(0.0, 0.0), deadline=deadline)


@pytest.fixture
def controller():
    robot = RobotController(3, parse_config({"robot_count": 4}))
    robot.replica.put(task_key(0), seed_task())
    return robot


def test_new_robot_is_idle(controller):
    assert controller.stage is RobotStage.IDLE
    assert controller.replica.get(state_key(3)) == "idle"
    assert not controller.needs_scan()
    assert not controller.needs_scan(4)
    assert controller.needs_scan(5)


def test_idle_robot_bids_then_claims_at_deadline(controller):
    assert controller.step(context(0)) == Vec2(0.0, 0.0)
    assert controller.drain_events() == [("bid", 0)]
    assert controller.replica.get(bid_key(0)).robot_id == 3

    controller.step(context(3))
    assert controller.stage is RobotStage.IDLE

    controller.step(context(5))
    assert controller.stage is RobotStage.NAVIGATE
    assert controller.replica.get(claim_key(0)) == (3, 0)
    assert ("won", 0) in controller.drain_events()
    assert controller.needs_scan()


def test_navigating_robot_moves_in_meters_per_second(controller):
    controller.step(context(0))
    controller.step(context(5))
    command = controller.step(context(6, scan=EMPTY_SCAN))
    # target gain 30 in gain units times the 0.01 velocity scale
    assert tuple(command) == pytest.approx((-0.3, 0.0))


def test_lower_bid_elsewhere_keeps_robot_idle(controller):
    controller.step(context(0))
    controller.replica.put(bid_key(0), Bid(task_id=0, robot_id=1, value=0.5))
    controller.step(context(5))
    assert controller.stage is RobotStage.IDLE
    assert claim_key(0) not in controller.replica


def test_navigating_robot_abandons_a_claimed_task(controller):
    controller.step(context(0))
    controller.step(context(5))
    controller.replica.put(claim_key(0), (1, 0))
    controller.step(context(6, scan=EMPTY_SCAN))
    assert controller.stage is RobotStage.IDLE
    assert controller.task is None


def test_idle_robot_ignores_tasks_after_termination(controller):
    controller.replica.put(TERMINATED_KEY, {"tick": 0, "robot": 1})
    controller.step(context(0))
    assert controller.drain_events() == []
    assert bid_key(0) not in controller.replica


def test_cage_branches_exclude_self(controller):
    record = AttachmentRecord(robot_id=1, branch=Branch.LEFT, attach_point=(0, 0))
    controller.replica.put(attach_key(1), record)
    record = AttachmentRecord(robot_id=3, branch=Branch.SEED, attach_point=(0, 0))
    controller.replica.put(attach_key(3), record)
    assert controller.cage_branches() == {1: Branch.LEFT}


def test_path_payload_preserves_waypoints():
    path = generate_path("straight_rot", 4, 0.3)
    restored = path_from_payload(path_to_payload(path))
    assert [wp.position for wp in restored] == [wp.position for wp in path]
    assert [wp.yaw for wp in restored] == pytest.approx([wp.yaw for wp in path])


@pytest.fixture
def bystander(controller):
    controller.replica.put(claim_key(0), (1, 0))
    return controller


def test_idle_robot_waits_for_the_seed_auction(bystander):
    assert bystander.step(context(3, scan=EMPTY_SCAN)) == Vec2(0.0, 0.0)
    assert bystander.drain_events() == []


def test_idle_robot_drifts_towards_the_object_after_the_seed_auction(bystander):
    command = bystander.step(context(6, scan=EMPTY_SCAN))
    # rally gain 10 in gain units times the 0.01 velocity scale
    assert tuple(command) == pytest.approx((-0.1, 0.0))
    assert bystander.stage is RobotStage.IDLE


def test_idle_robot_holds_next_to_a_working_robot(bystander):
    bystander.replica.put(state_key(1), "attached")
    near = [NeighborInfo(1, 0.5, math.pi / 2)]
    assert bystander.step(context(6, scan=EMPTY_SCAN, neighbors=near)) == Vec2(0.0, 0.0)

    far = [NeighborInfo(1, 0.9, math.pi / 2)]
    command = bystander.step(context(7, scan=EMPTY_SCAN, neighbors=far))
    assert tuple(command) == pytest.approx((0.0, 0.1))


def test_idle_robot_ignores_idle_neighbors(bystander):
    bystander.replica.put(state_key(1), "idle")
    near = [NeighborInfo(1, 0.5, math.pi / 2)]
    command = bystander.step(context(6, scan=EMPTY_SCAN, neighbors=near))
    assert tuple(command) == pytest.approx((-0.1, 0.0))


def test_terminated_swarm_stops_rallying(bystander):
    bystander.replica.put(TERMINATED_KEY, {"tick": 5, "robot": 1})
    assert not bystander.needs_scan(6)
    assert bystander.step(context(6, scan=EMPTY_SCAN)) == Vec2(0.0, 0.0)


def test_branch_tip_detects_closure_while_caged(controller):
    layout = [
        (0, Branch.SEED, (-1.35, 0.0)),
        (1, Branch.LEFT, (0.0, -1.35)),
        (2, Branch.RIGHT, (0.0, 1.35)),
        (3, Branch.LEFT, (1.35, 0.3)),
        (4, Branch.RIGHT, (1.35, 0.7)),
    ]
    records = {
        rid: AttachmentRecord(robot_id=rid, branch=branch, attach_point=point, task_id=rid)
        for rid, branch, point in layout
    }
    for rid, record in records.items():
        controller.replica.put(attach_key(rid), record)
    controller.task = CagingTask(task_id=3, branch=Branch.LEFT, approx_target=(1.35, 0.3), parent_robot=1)
    controller.record = records[3]
    controller.stage = RobotStage.CAGED
    controller.caging_state = EdgeFollowState(controller.task, phase=CagingPhase.ATTACHED)

    touching = ProximityScan((0.72,) + (0.0,) * 7, (0.72,) + (0.0,) * 7)
    controller.step(context(9, position=(1.35, 0.3), scan=touching))
    assert TERMINATED_KEY not in controller.replica
    controller.step(context(10, position=(1.35, 0.3), scan=touching))
    assert controller.replica.get(TERMINATED_KEY) == {"tick": 10, "robot": 3}
