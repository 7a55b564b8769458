"""Static figures for finished runs."""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .models import RunMetrics  # noqa: E402

logger = logging.getLogger(__name__)


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_trajectory(run: RunMetrics, out_dir: Union[str, Path]) -> Path:
    """Centroid trajectory against the desired waypoints."""
    fig, ax = plt.subplots(figsize=(5, 6))
    if run.desired_path:
        xs, ys = zip(*run.desired_path)
        ax.plot(xs, ys, "o--", color="tab:gray", label="desired")
    if run.trajectory:
        xs, ys = zip(*run.trajectory)
        ax.plot(xs, ys, "-", color="tab:blue", label="centroid")
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(f"seed {run.seed}")
    ax.legend(loc="best")
    return _save(fig, Path(out_dir) / f"trajectory_{run.config_hash}_{run.seed}.png")


def plot_times(runs: Sequence[RunMetrics], out_dir: Union[str, Path], tag: str) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    caging = [r.caging_time for r in runs if r.caging_time is not None]
    transport = [r.transport_time for r in runs if r.transport_time is not None]
    ax.boxplot([caging or [0.0], transport or [0.0]])
    ax.set_xticks([1, 2])
    ax.set_xticklabels(["caging", "transport"])
    ax.set_ylabel("time (s)")
    return _save(fig, Path(out_dir) / f"times_{tag}.png")


def _by_waypoint(runs: Sequence[RunMetrics], attr: str) -> Dict[int, List[float]]:
    series: Dict[int, List[float]] = {}
    for run in runs:
        for wp in run.waypoints:
            series.setdefault(wp.waypoint_index, []).append(float(getattr(wp, attr)))
    return series


def _mean_line(ax, series: Dict[int, List[float]], label: str) -> None:
    indices = sorted(series)
    ax.plot(indices, [sum(series[i]) / len(series[i]) for i in indices], "o-", label=label)


def plot_errors(runs: Sequence[RunMetrics], out_dir: Union[str, Path], tag: str) -> Path:
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    panels = (
        ("centroid_estimate_error", "centroid estimate error (m)"),
        ("position_error", "position error (m)"),
        ("yaw_error", "yaw error (rad)"),
    )
    for ax, (attr, label) in zip(axes, panels):
        _mean_line(ax, _by_waypoint(runs, attr), label)
        ax.set_xlabel("waypoint")
        ax.set_ylabel(label)
    return _save(fig, Path(out_dir) / f"errors_{tag}.png")


def plot_effective(runs: Sequence[RunMetrics], out_dir: Union[str, Path], tag: str) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    _mean_line(ax, _by_waypoint(runs, "effective_pushers"), "pushers")
    _mean_line(ax, _by_waypoint(runs, "effective_rotators"), "rotators")
    ax.set_xlabel("waypoint")
    ax.set_ylabel("effective robots")
    ax.legend(loc="best")
    return _save(fig, Path(out_dir) / f"effective_{tag}.png")


def emit_plots(runs: Sequence[RunMetrics], out_dir: Union[str, Path]) -> List[Path]:
    """
    Write all figures for a set of runs sharing one config.

    Args:
        runs: Finished runs
        out_dir: Target directory

    Returns:
        Paths of the written images; empty when there is nothing to plot
    """
    if not runs:
        logger.warning("No runs to plot")
        return []
    tag = runs[0].config_hash or "runs"
    written = []
    for run in sorted(runs, key=lambda r: r.seed):
        if run.trajectory:
            written.append(plot_trajectory(run, out_dir))
        else:
            logger.warning("Seed %d has no trajectory, skipping its plot", run.seed)
    written.append(plot_times(runs, out_dir, tag))
    if any(run.waypoints for run in runs):
        written.append(plot_errors(runs, out_dir, tag))
        written.append(plot_effective(runs, out_dir, tag))
    else:
        logger.warning("No waypoint records, skipping error plots")
    return written
