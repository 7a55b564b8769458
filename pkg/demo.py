"""
Quick demonstration of the sequential-caging-transport library.
"""

from caging_transport import Simulation, export_metrics, get_preset
from caging_transport.plots import emit_plots
from caging_transport.utils import configure_logging


def main():
    configure_logging("INFO")
    print("Sequential caging transport demo")
    print("=" * 50)

    config = get_preset("desk")
    print(f"\n1. Scenario: {config.robot_count} robots, {config.object.width} x {config.object.height} m object")
    print(f"   Path: {config.path.kind}, {config.path.waypoint_count} waypoints")

    print("\n2. Running seed 0...")
    with Simulation(config, seed=0) as sim:
        metrics = sim.run()

    print(f"   success:        {metrics.success}")
    print(f"   caging time:    {metrics.caging_time} s")
    print(f"   transport time: {metrics.transport_time} s")
    print(f"   cage size:      {metrics.attached_count} robots")
    if metrics.failure_reason:
        print(f"   failure:        {metrics.failure_reason}")

    print("\n3. Writing metrics and figures to demo_results/")
    export_metrics([metrics], "demo_results")
    for path in emit_plots([metrics], "demo_results"):
        print(f"   {path}")


if __name__ == "__main__":
    main()
