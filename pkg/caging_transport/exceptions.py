"""Custom exceptions for the caging-transport library."""

from typing import Optional


class CagingTransportError(Exception):
    """Base exception for all caging and transport related errors."""
    pass


class GeometryError(CagingTransportError):
    """Raised for invalid polygon or point queries."""
    pass


class DegenerateGeometry(GeometryError):
    """Raised when a polygon has zero area or too few vertices."""
    pass


class InteriorPoint(GeometryError):
    """Raised when a boundary query is made from strictly inside a polygon."""
    pass


class NonConvexPolygon(GeometryError):
    """Raised when a polygon has a reflex vertex."""
    pass


class WorldError(CagingTransportError):
    """Base class for simulated-world errors."""
    pass


class UnknownRobot(WorldError):
    """Raised when a robot id is not part of the world."""

    def __init__(self, robot_id: int):
        super().__init__(f"Unknown robot id: {robot_id}")
        self.robot_id = robot_id


class PlacementFailure(WorldError):
    """Raised when the deployment cluster cannot hold the requested robots."""

    def __init__(self, robot_count: int, placed: int):
        super().__init__(f"Could only place {placed} of {robot_count} robots in the cluster")
        self.robot_count = robot_count
        self.placed = placed


class AllocationError(CagingTransportError):
    """Base class for task allocation errors."""
    pass


class AuctionTimeout(AllocationError):
    """Raised when no bid is visible when an auction closes."""

    def __init__(self, task_id: int):
        super().__init__(f"No bids visible for task {task_id} at the auction deadline")
        self.task_id = task_id


class NotAttached(AllocationError):
    """Raised when a robot spawns targets without touching the object."""

    def __init__(self, robot_id: int):
        super().__init__(f"Robot {robot_id} is not attached to the object")
        self.robot_id = robot_id


class ControlError(CagingTransportError):
    """Base class for errors raised by motion primitives."""
    pass


class NoNeighbor(ControlError):
    """Raised when edge following has no neighbor to orbit."""
    pass


class LostContact(ControlError):
    """Raised when the obstacle vector vanishes while contact is expected."""
    pass


class FormationLost(ControlError):
    """Raised when none of the formation reference neighbors is visible."""
    pass


class DegenerateLeverArm(ControlError):
    """Raised when a robot sits on the estimated centroid."""
    pass


class InsufficientContributors(ControlError):
    """Raised when fewer positions than the quorum are known."""

    def __init__(self, have: int, need: int):
        super().__init__(f"Centroid estimate needs {need} positions, only {have} known")
        self.have = have
        self.need = need


class ZeroForce(ControlError):
    """Raised when the resultant force is requested over an empty arc."""
    pass


class RunError(CagingTransportError):
    """Base class for whole-run failures."""
    pass


class StalledRun(RunError):
    """Raised when a run stops making progress."""

    def __init__(self, reason: str, tick: Optional[int] = None):
        super().__init__(f"Run stalled at tick {tick}: {reason}")
        self.reason = reason
        self.tick = tick


class ConfigError(CagingTransportError):
    """Base class for configuration errors."""
    pass


class ConfigSyntax(ConfigError):
    """Raised when a config file cannot be parsed or has unknown fields."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class ConfigInvalid(ConfigError):
    """Raised when a parsed config violates a rule."""

    def __init__(self, message: str, rule: Optional[str] = None):
        super().__init__(message)
        self.rule = rule


class ExportError(CagingTransportError):
    """Raised when metric files or figures cannot be written."""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.path = path
