"""Path generation, mass model, metric formatting and logging helpers."""

import hashlib
import json
import logging
import math
import os
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ExportError
from .geometry import Vec2
from .models import DEFAULT_DENSITY, PathSpec, RunMetrics, ScenarioConfig, TransportPath, Waypoint

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
LOG_LEVEL_ENV = "SWARM_LOG_LEVEL"

SUMMARY_COLUMNS = (
    "schema_version",
    "seed",
    "success",
    "caging_time_s",
    "transport_time_s",
    "attached_count",
    "final_spacing_m",
    "final_position_error_m",
    "final_yaw_error_rad",
    "failure_reason",
)
WAYPOINT_COLUMNS = (
    "schema_version",
    "seed",
    "waypoint_index",
    "tick",
    "centroid_estimate_error_m",
    "position_error_m",
    "yaw_error_rad",
    "effective_pushers",
    "effective_rotators",
    "rotated",
)
DISTANCE_COLUMNS = ("schema_version", "seed", "tick", "mean_distance_m", "std_distance_m")
EVENT_COLUMNS = ("tick", "task_id", "event", "robot_id")


def configure_logging(level: Optional[Union[str, int]] = None) -> None:
    """
    Configure the package logger with a single stream handler.

    Args:
        level: Logging level; defaults to $SWARM_LOG_LEVEL, then WARNING
    """
    if level is None:
        level = os.environ.get(LOG_LEVEL_ENV, "WARNING")
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.WARNING
    root = logging.getLogger("caging_transport")
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)


def mass_for_size(width: float, height: float, density: float = DEFAULT_DENSITY) -> float:
    """
    Mass of a constant-density hollow box from its footprint.

    Args:
        width: Footprint width in meters
        height: Footprint height in meters
        density: Areal density in kg/m^2

    Returns:
        Mass in kg, rounded to micrograms
    """
    if width <= 0 or height <= 0:
        raise ValueError("object dimensions must be positive")
    return round(density * width * height, 9)


def generate_path(
    kind: Union[str, PathSpec],
    waypoint_count: int = 9,
    spacing: float = 1.0,
    start: Tuple[float, float] = (0.0, 0.0),
    start_yaw: float = 0.0,
    heading_deg: float = 90.0,
) -> TransportPath:
    """
    Build one of the benchmark paths.

    Waypoint 0 is the start pose. ``straight`` keeps the yaw, ``straight_rot``
    adds a quarter turn every third waypoint and ``zigzag`` alternates
    +45 and -45 degree legs around the heading.

    Args:
        kind: Path kind, or a PathSpec carrying kind, count, spacing and heading
        waypoint_count: Number of waypoints including the start
        spacing: Leg length in meters
        start: Starting centroid position
        start_yaw: Starting object yaw
        heading_deg: Direction of travel, 90 is +y

    Returns:
        TransportPath with ``waypoint_count`` waypoints
    """
    if isinstance(kind, PathSpec):
        waypoint_count, spacing, heading_deg = kind.waypoint_count, kind.spacing, kind.heading_deg
        kind = kind.kind
    if waypoint_count < 2:
        raise ValueError("a path needs at least two waypoints")
    heading = math.radians(heading_deg)
    point = Vec2.of(start)
    waypoints = [Waypoint(position=(point.x, point.y), yaw=start_yaw)]
    for k in range(1, waypoint_count):
        if kind == "zigzag":
            leg = heading + (math.pi / 4 if k % 2 else -math.pi / 4)
        elif kind in ("straight", "straight_rot"):
            leg = heading
        else:
            raise ValueError(f"unknown path kind: {kind}")
        point = point + Vec2.polar(spacing, leg)
        yaw = start_yaw + (math.pi / 2) * (k // 3) if kind == "straight_rot" else start_yaw
        waypoints.append(Waypoint(position=(round(point.x, 12), round(point.y, 12)), yaw=yaw))
    return TransportPath(waypoints=waypoints, kind=kind)


def config_hash(config: ScenarioConfig) -> str:
    """First 10 hex characters of the SHA-1 of the canonical config JSON."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(canonical.encode("utf-8")).hexdigest()[:10]


def cage_distances(positions: np.ndarray, center: Vec2) -> np.ndarray:
    """Distances between angularly consecutive cage robots, wrapping around."""
    if len(positions) < 2:
        return np.zeros(0)
    angles = np.arctan2(positions[:, 1] - center.y, positions[:, 0] - center.x)
    ordered = positions[np.argsort(angles, kind="stable")]
    gaps = np.roll(ordered, -1, axis=0) - ordered
    return np.hypot(gaps[:, 0], gaps[:, 1])


def distance_stats(positions: np.ndarray, center: Vec2) -> Tuple[float, float]:
    gaps = cage_distances(positions, center)
    if len(gaps) == 0:
        return 0.0, 0.0
    return float(np.mean(gaps)), float(np.std(gaps))


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value).replace(",", ";").replace("\n", " ")


class MetricsFormatter:
    """Utility class for formatting run metrics as CSV tables."""

    @staticmethod
    def to_summary_csv(runs: Sequence[RunMetrics], include_headers: bool = True) -> str:
        """
        Format one summary row per run.

        Args:
            runs: Finished runs
            include_headers: Whether to include the header line

        Returns:
            CSV formatted string
        """
        lines = [",".join(SUMMARY_COLUMNS)] if include_headers else []
        for run in runs:
            row = (
                SCHEMA_VERSION,
                run.seed,
                run.success,
                run.caging_time,
                run.transport_time,
                run.attached_count,
                run.final_spacing,
                run.final_position_error,
                run.final_yaw_error,
                run.failure_reason,
            )
            lines.append(",".join(_cell(v) for v in row))
        return "\n".join(lines) + "\n"

    @staticmethod
    def to_waypoint_csv(runs: Sequence[RunMetrics], include_headers: bool = True) -> str:
        lines = [",".join(WAYPOINT_COLUMNS)] if include_headers else []
        for run in runs:
            for wp in run.waypoints:
                row = (
                    SCHEMA_VERSION,
                    run.seed,
                    wp.waypoint_index,
                    wp.tick,
                    wp.centroid_estimate_error,
                    wp.position_error,
                    wp.yaw_error,
                    wp.effective_pushers,
                    wp.effective_rotators,
                    wp.rotated,
                )
                lines.append(",".join(_cell(v) for v in row))
        return "\n".join(lines) + "\n"

    @staticmethod
    def to_distance_csv(runs: Sequence[RunMetrics], include_headers: bool = True) -> str:
        lines = [",".join(DISTANCE_COLUMNS)] if include_headers else []
        for run in runs:
            for sample in run.distances:
                row = (SCHEMA_VERSION, run.seed, sample.tick, sample.mean, sample.std)
                lines.append(",".join(_cell(v) for v in row))
        return "\n".join(lines) + "\n"

    @staticmethod
    def to_event_csv(run: RunMetrics, include_headers: bool = True) -> str:
        lines = [",".join(EVENT_COLUMNS)] if include_headers else []
        for event in run.events:
            lines.append(",".join(_cell(v) for v in (event.tick, event.task_id, event.event, event.robot_id)))
        return "\n".join(lines) + "\n"


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise ExportError(f"Failed to write {path}: {e}", path=str(path))
    return path


def write_events(run: RunMetrics, out_dir: Union[str, Path]) -> Path:
    return _write(Path(out_dir) / f"events_{run.seed}.csv", MetricsFormatter.to_event_csv(run))


def export_metrics(runs: Sequence[RunMetrics], out_dir: Union[str, Path]) -> List[Path]:
    """
    Write the summary, waypoint, distance and per-run event tables.

    Args:
        runs: Finished runs, at least one
        out_dir: Target directory, created if missing

    Returns:
        Paths of the written files

    Raises:
        ExportError: If a file cannot be written
    """
    if not runs:
        raise ValueError("export_metrics needs at least one run")
    out = Path(out_dir)
    ordered = sorted(runs, key=lambda r: r.seed)
    written = [
        _write(out / "summary.csv", MetricsFormatter.to_summary_csv(ordered)),
        _write(out / "waypoints.csv", MetricsFormatter.to_waypoint_csv(ordered)),
        _write(out / "distances.csv", MetricsFormatter.to_distance_csv(ordered)),
    ]
    written.extend(write_events(run, out) for run in ordered)
    logger.info("Exported metrics for %d runs to %s", len(ordered), out)
    return written


def read_state_dump(path: Union[str, Path]) -> List[dict]:
    """
    Load a line-delimited JSON state dump.

    Raises:
        ExportError: If the file cannot be read or a line is not JSON
    """
    p = Path(path)
    try:
        with p.open("r", encoding="utf-8") as handle:
            return [json.loads(line) for line in handle if line.strip()]
    except (OSError, json.JSONDecodeError) as e:
        raise ExportError(f"Failed to read state dump {p}: {e}", path=str(p))


def success_rate(runs: Iterable[RunMetrics]) -> float:
    runs = list(runs)
    if not runs:
        return 0.0
    return sum(1 for r in runs if r.success) / len(runs)


def save_runs(runs: Sequence[RunMetrics], out_dir: Union[str, Path]) -> Path:
    """Full run records as JSON lines, read back by the plot verb."""
    text = "".join(run.model_dump_json() + "\n" for run in sorted(runs, key=lambda r: r.seed))
    return _write(Path(out_dir) / "runs.jsonl", text)


def load_runs(out_dir: Union[str, Path]) -> List[RunMetrics]:
    """
    Read back ``runs.jsonl``.

    Raises:
        ExportError: If the file is missing or malformed
    """
    p = Path(out_dir) / "runs.jsonl"
    try:
        lines = p.read_text(encoding="utf-8").splitlines()
        return [RunMetrics.model_validate_json(line) for line in lines if line.strip()]
    except (OSError, ValueError) as e:
        raise ExportError(f"Failed to read runs from {p}: {e}", path=str(p))
