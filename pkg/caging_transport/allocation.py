"""Seed election, branch target spawning, auctions and caging termination."""

import logging
import math
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from .caging import obstacle_vector
from .comms import Adjacency, VirtualStigmergy, vs_propagate
from .exceptions import AuctionTimeout, NotAttached
from .geometry import Vec2
from .models import AllocationEvent, AttachmentRecord, Bid, Branch, CagingTask
from .world import ProximityScan

logger = logging.getLogger(__name__)

SEED_TASK_ID = 0


def task_key(task_id: int) -> str:
    return f"task/{task_id}"


def bid_key(task_id: int, attempt: int = 0) -> str:
    return f"bid/{task_id}" if attempt == 0 else f"bid/{task_id}.{attempt}"


def attach_key(robot_id: int) -> str:
    return f"attached/{robot_id}"


def compute_bid(position: Vec2, task: CagingTask, robot_id: int = 0) -> Bid:
    """Euclidean distance from the robot to the task's approximate target."""
    return Bid(task_id=task.task_id, robot_id=robot_id, value=(task.target - position).norm())


def submit_bid(replica: VirtualStigmergy, bid: Bid, attempt: int = 0) -> bool:
    """Write the bid if it beats the lowest bid known locally."""
    key = bid_key(bid.task_id, attempt)
    if bid.beats(replica.get(key)):
        replica.put(key, bid)
        return True
    return False


def auction_winner(replica: VirtualStigmergy, task_id: int, attempt: int = 0) -> Optional[Bid]:
    """Lowest bid known to this replica."""
    return replica.get(bid_key(task_id, attempt))


def auction_deadline(task: CagingTask, auction_ticks: int) -> int:
    return task.announce_tick + auction_ticks


def run_auction(
    task: CagingTask,
    replicas: Mapping[int, VirtualStigmergy],
    graph: Adjacency,
    auction_ticks: int,
    bidders: Mapping[int, Vec2],
    observer: Optional[int] = None,
) -> int:
    """Run a tuple-space auction for ``auction_ticks`` gossip rounds.

    Each round every bidder re-submits its bid when it beats the lowest bid
    it knows, then one gossip round runs. The winner is read from the
    observer's replica (the announcing robot by default).

    Raises:
        AuctionTimeout: If the observer sees no bid at the deadline
    """
    bids = {rid: compute_bid(pos, task, rid) for rid, pos in bidders.items()}
    for _ in range(auction_ticks):
        for rid in sorted(bids):
            submit_bid(replicas[rid], bids[rid], task.attempt)
        vs_propagate(replicas, graph)
    if observer is None:
        observer = task.parent_robot if task.parent_robot in replicas else min(replicas)
    winner = auction_winner(replicas[observer], task.task_id, task.attempt)
    if winner is None:
        raise AuctionTimeout(task.task_id)
    logger.debug("Task %d won by robot %d (bid %.3f)", task.task_id, winner.robot_id, winner.value)
    return winner.robot_id


def elect_seed(
    positions: Mapping[int, Vec2],
    initial_centroid: Vec2,
    replicas: Optional[Mapping[int, VirtualStigmergy]] = None,
    graph: Optional[Adjacency] = None,
    auction_ticks: Optional[int] = None,
) -> int:
    """Auction the first caging task; the bid is the distance to the initial object centroid.

    Without a graph every robot hears every other one.
    """
    ids = sorted(positions)
    if replicas is None:
        replicas = {rid: VirtualStigmergy(rid) for rid in ids}
    if graph is None:
        graph = {rid: [other for other in ids if other != rid] for rid in ids}
    if auction_ticks is None:
        auction_ticks = max(1, len(ids))
    task = CagingTask(
        task_id=SEED_TASK_ID,
        branch=Branch.SEED,
        approx_target=(initial_centroid.x, initial_centroid.y),
    )
    return run_auction(task, replicas, graph, auction_ticks, positions, observer=ids[0])


def branch_tangent(scan: ProximityScan) -> Vec2:
    """Counter-clockwise unit tangent of the sensed surface."""
    return -obstacle_vector(scan.object_readings).normalized().perp()


def spawn_branch_targets(
    robot_id: int,
    position: Vec2,
    scan: ProximityScan,
    branch: Branch,
    spacing: float,
    next_task_id: int,
    tick: int = 0,
    threshold: float = 0.7,
) -> List[CagingTask]:
    """Targets one I_d further along the surface from an attached robot.

    The seed spawns a LEFT (counter-clockwise) and a RIGHT task; a branch
    robot spawns one task on its own branch.

    Raises:
        NotAttached: If the robot does not sense the object above threshold
    """
    if scan.max_object_reading < threshold:
        raise NotAttached(robot_id)
    tangent = branch_tangent(scan)
    directions = {Branch.LEFT: tangent, Branch.RIGHT: -tangent}
    wanted = [Branch.LEFT, Branch.RIGHT] if branch is Branch.SEED else [branch]
    tasks = []
    for offset, side in enumerate(wanted):
        target = position + directions[side] * spacing
        tasks.append(
            CagingTask(
                task_id=next_task_id + offset,
                branch=side,
                approx_target=(target.x, target.y),
                parent_robot=robot_id,
                announce_tick=tick,
            )
        )
    return tasks


def check_termination(
    left: Sequence[AttachmentRecord], right: Sequence[AttachmentRecord], d_t: float
) -> bool:
    """True iff the two branch tips are within d_T and no earlier cross pair is."""
    if not left or not right:
        return False
    p, q = left[-1], right[-1]
    if (p.point - q.point).norm() > d_t:
        return False
    for l in left[:-1]:
        for r in right[:-1]:
            if (l.point - r.point).norm() <= d_t:
                return False
    return True


def branch_records(
    records: Iterable[AttachmentRecord], branch: Branch
) -> List[AttachmentRecord]:
    """Records of one branch ordered by spawn sequence."""
    return sorted((r for r in records if r.branch is branch), key=lambda r: (r.task_id, r.tick))


def required_robots(perimeter: float, spacing: float) -> int:
    return math.ceil(perimeter / spacing)


def inflated_spacing(spacing: float, factor: float) -> float:
    return spacing * factor


def cage_fits(polygon_perimeter: float, standoff: float, spacing: float, robots: int) -> bool:
    """Whether ``robots`` at ``spacing`` can close the standoff contour."""
    contour = polygon_perimeter + 2.0 * math.pi * standoff
    return robots >= required_robots(contour, spacing)


class EventLog:
    """Allocation events in arrival order."""

    def __init__(self):
        self.events: List[AllocationEvent] = []
        self._seen: Dict[tuple, int] = {}

    def record(self, tick: int, task_id: int, event: str, robot_id: int, once: bool = True) -> None:
        key = (task_id, event, robot_id)
        if once and key in self._seen:
            return
        self._seen[key] = tick
        self.events.append(AllocationEvent(tick=tick, task_id=task_id, event=event, robot_id=robot_id))
        logger.debug("tick %d: task %d %s robot %d", tick, task_id, event, robot_id)

    def first(self, event: str) -> Optional[AllocationEvent]:
        for e in self.events:
            if e.event == event:
                return e
        return None

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)
