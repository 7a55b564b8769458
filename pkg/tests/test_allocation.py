"""
Tests for bidding, seed election, branch spawning and termination.
"""

import pytest

from caging_transport.allocation import (
    EventLog,
    auction_winner,
    bid_key,
    cage_fits,
    check_termination,
    compute_bid,
    elect_seed,
    inflated_spacing,
    required_robots,
    run_auction,
    spawn_branch_targets,
    submit_bid,
    task_key,
)
from caging_transport.comms import VirtualStigmergy
from caging_transport.exceptions import AuctionTimeout, NotAttached
from caging_transport.geometry import Vec2
from caging_transport.models import AttachmentRecord, Bid, Branch, CagingTask
from caging_transport.world import ProximityScan


def scan_with(index, value):
    readings = [0.0] * 8
    readings[index] = value
    return ProximityScan(tuple(readings), tuple(readings))


def record(robot_id, branch, point, task_id):
    return AttachmentRecord(robot_id=robot_id, branch=branch, attach_point=point, task_id=task_id)


def complete(ids):
    return {i: [j for j in ids if j != i] for i in ids}


def test_keys():
    assert task_key(3) == "task/3"
    assert bid_key(3) == "bid/3"
    assert bid_key(3, 2) == "bid/3.2"


def test_compute_bid_is_distance_to_target():
    task = CagingTask(task_id=1, branch=Branch.LEFT, approx_target=(0.0, 0.0))
    bid = compute_bid(Vec2(3.0, 4.0), task, robot_id=7)
    assert bid.value == pytest.approx(5.0)
    assert (bid.task_id, bid.robot_id) == (1, 7)


def test_bid_ordering_breaks_ties_by_robot_id():
    replica = VirtualStigmergy(0)
    assert submit_bid(replica, Bid(task_id=1, robot_id=4, value=2.0))
    assert not submit_bid(replica, Bid(task_id=1, robot_id=5, value=2.0))
    assert submit_bid(replica, Bid(task_id=1, robot_id=2, value=2.0))
    assert submit_bid(replica, Bid(task_id=1, robot_id=9, value=1.0))
    assert auction_winner(replica, 1).robot_id == 9


def test_retry_attempts_use_fresh_bid_keys():
    replica = VirtualStigmergy(0)
    submit_bid(replica, Bid(task_id=1, robot_id=4, value=2.0))
    assert auction_winner(replica, 1, attempt=1) is None
    assert submit_bid(replica, Bid(task_id=1, robot_id=6, value=3.0), attempt=1)
    assert auction_winner(replica, 1, attempt=1).robot_id == 6


def test_run_auction_picks_closest_robot():
    ids = [0, 1, 2]
    replicas = {i: VirtualStigmergy(i) for i in ids}
    task = CagingTask(task_id=1, branch=Branch.LEFT, approx_target=(0.0, 0.0), parent_robot=0)
    bidders = {1: Vec2(2.0, 0.0), 2: Vec2(1.0, 0.0)}
    assert run_auction(task, replicas, complete(ids), 3, bidders) == 2


def test_run_auction_without_bids_times_out():
    replicas = {0: VirtualStigmergy(0)}
    task = CagingTask(task_id=1, branch=Branch.LEFT, approx_target=(0.0, 0.0), parent_robot=0)
    with pytest.raises(AuctionTimeout):
        run_auction(task, replicas, {0: []}, 3, {})


def test_elect_seed_nearest_and_tie_break():
    positions = {0: Vec2(3.0, 0.0), 1: Vec2(2.0, 0.0), 2: Vec2(0.0, 2.0)}
    assert elect_seed(positions, Vec2(0.0, 0.0)) == 1
    positions = {4: Vec2(1.0, 0.0), 3: Vec2(-1.0, 0.0)}
    assert elect_seed(positions, Vec2(0.0, 0.0)) == 3


def test_seed_spawns_left_and_right_targets():
    # robot left of the object, object sensed straight ahead on sensor 0
    tasks = spawn_branch_targets(5, Vec2(-1.35, 0.0), scan_with(0, 0.72), Branch.SEED, 0.45, 1, tick=12)
    assert [(t.task_id, t.branch) for t in tasks] == [(1, Branch.LEFT), (2, Branch.RIGHT)]
    assert tasks[0].approx_target == pytest.approx((-1.35, -0.45))
    assert tasks[1].approx_target == pytest.approx((-1.35, 0.45))
    assert all(t.parent_robot == 5 and t.announce_tick == 12 for t in tasks)


def test_branch_robot_spawns_one_target_on_its_branch():
    tasks = spawn_branch_targets(6, Vec2(-1.35, 0.0), scan_with(0, 0.72), Branch.RIGHT, 0.45, 4)
    assert len(tasks) == 1
    assert (tasks[0].task_id, tasks[0].branch) == (4, Branch.RIGHT)


def test_spawn_requires_object_contact():
    with pytest.raises(NotAttached):
        spawn_branch_targets(5, Vec2(-2.0, 0.0), scan_with(0, 0.3), Branch.SEED, 0.45, 1)


def test_check_termination():
    d_t = 1.85 * 0.45
    left = [record(1, Branch.LEFT, (0.0, -0.45), 1), record(3, Branch.LEFT, (0.45, -0.9), 3)]
    right = [record(2, Branch.RIGHT, (0.0, 0.45), 2), record(4, Branch.RIGHT, (0.9, -0.5), 4)]
    assert check_termination(left, right, d_t)
    assert not check_termination(left, [], d_t)
    far = [record(2, Branch.RIGHT, (0.0, 3.0), 2), record(4, Branch.RIGHT, (0.0, 4.0), 4)]
    assert not check_termination(left, far, d_t)


def test_check_termination_rejects_earlier_close_pair():
    d_t = 1.85 * 0.45
    left = [record(1, Branch.LEFT, (0.0, 0.0), 1), record(3, Branch.LEFT, (0.5, 0.0), 3)]
    right = [record(2, Branch.RIGHT, (0.0, 0.3), 2), record(4, Branch.RIGHT, (0.6, 0.3), 4)]
    assert not check_termination(left, right, d_t)


def test_cage_sizing_helpers():
    assert required_robots(8.0, 0.45) == 18
    assert inflated_spacing(0.45, 1.1) == pytest.approx(0.495)
    assert cage_fits(8.0, 0.35, 0.45, 30)
    assert not cage_fits(8.0, 0.35, 0.45, 10)


def test_event_log_deduplicates():
    log = EventLog()
    log.record(3, 1, "bid", 4)
    log.record(5, 1, "bid", 4)
    log.record(5, 1, "bid", 4, once=False)
    log.record(6, 1, "won", 4)
    assert len(log) == 3
    assert log.first("won").tick == 6
    assert log.first("terminated") is None
