"""
Sequential Caging Transport - a deterministic 2D simulator of a robot swarm
that cages a convex object one robot at a time and then pushes and rotates
it along a waypoint path.

The library exposes the individual controllers for unit use, a single-run
Simulation and an asynchronous multi-seed sweep runner.
"""

__version__ = "1.0.0"

from .config import get_preset, load_config, parse_config, save_config
from .controller import RobotController
from .exceptions import (
    CagingTransportError,
    ConfigError,
    ConfigInvalid,
    ConfigSyntax,
    ControlError,
    ExportError,
    GeometryError,
    RunError,
    StalledRun,
)
from .geometry import ConvexPolygon, Vec2
from .models import Branch, RunMetrics, ScenarioConfig, TransportPath, Waypoint
from .simulation import Simulation, run_experiment, run_single
from .sweep import AsyncSweepRunner, run_sweep
from .utils import export_metrics, generate_path, mass_for_size

__all__ = [
    "AsyncSweepRunner",
    "Branch",
    "CagingTransportError",
    "ConfigError",
    "ConfigInvalid",
    "ConfigSyntax",
    "ControlError",
    "ConvexPolygon",
    "ExportError",
    "GeometryError",
    "RobotController",
    "RunError",
    "RunMetrics",
    "ScenarioConfig",
    "Simulation",
    "StalledRun",
    "TransportPath",
    "Vec2",
    "Waypoint",
    "export_metrics",
    "generate_path",
    "get_preset",
    "load_config",
    "mass_for_size",
    "parse_config",
    "run_experiment",
    "run_single",
    "run_sweep",
    "save_config",
]
