"""Command line entry point: ``caging-transport <verb> [options]``."""

import argparse
import logging
import re
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .config import get_preset, load_config, parse_config, save_config
from .exceptions import CagingTransportError, ConfigError
from .models import RunMetrics, ScenarioConfig
from .plots import emit_plots, plot_trajectory
from .sweep import run_sweep
from .utils import (
    config_hash,
    configure_logging,
    export_metrics,
    load_runs,
    read_state_dump,
    save_runs,
    success_rate,
)

logger = logging.getLogger(__name__)

VERBS = ("validate", "run", "sweep", "plot", "replay")
_DUMP_SEED = re.compile(r"state_(-?\d+)\.jsonl$")


def parse_seeds(text: str) -> List[int]:
    """
    Parse ``--seeds``: a count ``n`` means seeds 0..n-1, a comma list is taken as is.

    Raises:
        argparse.ArgumentTypeError: If the value is empty or not integers
    """
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seeds: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("no seeds given")
    if len(parts) == 1 and "," not in text:
        if values[0] < 1:
            raise argparse.ArgumentTypeError("seed count must be positive")
        return list(range(values[0]))
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caging-transport",
        description="Sequential caging and collective transport simulator.",
    )
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("--config", type=Path, help="YAML scenario file")
    parser.add_argument("--preset", help="Named scenario used when --config is absent")
    parser.add_argument("--seeds", type=parse_seeds, help="Seed count n, or a comma separated list")
    parser.add_argument("--out", type=Path, default=Path("results"), help="Output directory")
    parser.add_argument("--max-ticks", type=int, dest="max_ticks", help="Override max_ticks")
    parser.add_argument("--parallel", type=int, default=1, help="Concurrent simulations for sweep")
    parser.add_argument(
        "--dump-state", action="store_true", dest="dump_state", help="Write per-tick state dumps"
    )
    parser.add_argument("--dump", type=Path, help="State dump to re-render for replay")
    parser.add_argument("--log-level", dest="log_level", help="Overrides $SWARM_LOG_LEVEL")
    return parser


def resolve_config(args: argparse.Namespace) -> ScenarioConfig:
    """Load the scenario from --config or --preset and apply --max-ticks."""
    if args.config is not None:
        config = load_config(args.config)
    elif args.preset:
        config = get_preset(args.preset)
    else:
        config = parse_config({})
    if args.max_ticks is not None:
        data = config.model_dump(mode="json")
        data["max_ticks"] = args.max_ticks
        config = parse_config(data)
    return config


def _report(runs: Sequence[RunMetrics]) -> None:
    for run in runs:
        status = "ok" if run.success else f"FAILED ({run.failure_reason})"
        print(f"seed {run.seed}: {status}")
    print(f"success rate: {success_rate(runs):.2f} over {len(runs)} runs")


def _simulate(args: argparse.Namespace, parallel: int) -> int:
    config = resolve_config(args)
    seeds = args.seeds if args.seeds is not None else list(config.seeds)
    args.out.mkdir(parents=True, exist_ok=True)
    save_config(config, args.out / "config.yaml")
    runs = run_sweep(config, seeds, parallel=parallel, out_dir=args.out, dump_state=args.dump_state)
    export_metrics(runs, args.out)
    save_runs(runs, args.out)
    _report(runs)
    return 0 if runs and all(run.success for run in runs) else 1


def cmd_validate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    print(f"config ok: {config.robot_count} robots, hash {config_hash(config)}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    return _simulate(args, parallel=1)


def cmd_sweep(args: argparse.Namespace) -> int:
    return _simulate(args, parallel=max(1, args.parallel))


def cmd_plot(args: argparse.Namespace) -> int:
    runs = load_runs(args.out)
    written = emit_plots(runs, args.out)
    print(f"wrote {len(written)} figures to {args.out}")
    return 0 if runs and all(run.success for run in runs) else 1


def cmd_replay(args: argparse.Namespace) -> int:
    """Re-render the trajectory figure of one run from its state dump."""
    if args.dump is None:
        raise ConfigError("replay needs --dump <state_<seed>.jsonl>")
    records = read_state_dump(args.dump)
    match = _DUMP_SEED.search(args.dump.name)
    seed = int(match.group(1)) if match else 0
    trajectory = [(r["object"]["x"], r["object"]["y"]) for r in records]
    tag = config_hash(resolve_config(args)) if (args.config or args.preset) else "replay"
    run = RunMetrics(seed=seed, trajectory=trajectory, config_hash=tag)
    path = plot_trajectory(run, args.out)
    print(f"replayed {len(records)} ticks into {path}")
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "plot": cmd_plot,
    "replay": cmd_replay,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.verb](args)
    except CagingTransportError as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
