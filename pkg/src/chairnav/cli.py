"""Command-line entry point.

Verbs: simulate, door-bench, map, navigate, pipeline-bench. Every report
path writes CSV metrics plus rendered figures next to them.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import figures, harness
from .mapper import save_session
from .simulator import load_world_file


def _write(path, text):
    with open(path, "w") as f:
        f.write(text)
    print(f"wrote {path}")


def cmd_simulate(args) -> int:
    sc = harness.parse_scenario(args.scenario)
    results = harness.run_scenario(sc, map_dir=args.map)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "metrics.csv"), harness.export_metrics(results))
    world = load_world_file(sc.world_path)
    r0 = results[0]
    figures.save_trajectory_figure(
        world, {"executed": r0.trajectory[:, :2], "odometry": r0.odom_trajectory[:, :2]},
        os.path.join(args.out, "trajectory.png"),
        goals=r0.extras.get("goals"), title=sc.name)
    for r in results:
        m = r.metrics
        print(f"trial {m.trial}: success={m.success} reason={m.reason or '-'} "
              f"time={m.time_s:.1f}s width="
              f"{'-' if m.detected_width is None else f'{m.detected_width:.3f}'}")
    return 0 if all(r.metrics.success for r in results) else 1


def cmd_door_bench(args) -> int:
    rows, summaries = harness.door_benchmark(args.suite, trials=args.trials,
                                             jobs=args.jobs)
    _write(args.csv, harness.export_metrics(rows))
    summary_csv = os.path.splitext(args.csv)[0] + "_summary.csv"
    _write(summary_csv, harness.export_door_summary(summaries))
    figures.save_door_summary_figure(
        summaries, os.path.splitext(args.csv)[0] + "_summary.png")
    total = summaries[-1]
    print(f"suite: {total.tests} tests, detection {total.detection_rate:.1%}, "
          f"traversal {total.traversal_rate:.1%}")
    return 0 if total.traversal_rate == 1.0 else 1


def cmd_map(args) -> int:
    sc = harness.parse_scenario(args.scenario)
    results = harness.run_scenario(sc)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "metrics.csv"), harness.export_metrics(results))
    r0 = results[0]
    grid = r0.extras.get("grid")
    graph = r0.extras.get("graph")
    if grid is not None and graph is not None:
        session = os.path.join(args.out, "session")
        save_session(graph, grid, session)
        print(f"wrote {session}")
        figures.save_grid_figure(grid, os.path.join(args.out, "map.png"),
                                 trajectory=r0.trajectory, title=sc.name)
    return 0 if r0.metrics.success else 1


def cmd_navigate(args) -> int:
    sc = harness.parse_scenario(args.scenario)
    results = harness.run_scenario(sc, map_dir=args.map)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "metrics.csv"), harness.export_metrics(results))
    world = load_world_file(sc.world_path)
    r0 = results[0]
    trajs = {"executed": r0.trajectory[:, :2]}
    if "initial_path" in r0.extras:
        trajs["planned"] = r0.extras["initial_path"]
    figures.save_trajectory_figure(world, trajs,
                                   os.path.join(args.out, "trajectory.png"),
                                   title=sc.name)
    m = r0.metrics
    print(f"navigate: success={m.success} reason={m.reason or '-'} "
          f"time={m.time_s:.1f}s clearance={m.min_clearance_m:.2f}m")
    return 0 if m.success else 1


def cmd_pipeline_bench(args) -> int:
    stats = harness.pipeline_bench()
    lines = [f"{k},{v}" for k, v in stats.items()]
    print("\n".join(lines))
    if args.csv:
        _write(args.csv, "key,value\n" + "\n".join(lines) + "\n")
    ok = (stats["full_res_points"] == 217088
          and stats["decimated_points"] <= 54272)
    print("point counts:", "ok" if ok else "MISMATCH")
    return 0 if ok else 1


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="chairnav",
                                description="wheelchair navigation benchmark harness")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("simulate", help="run one scenario, write metrics + figure")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--map", default=None, help="map session dir (navigate tasks)")
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("door-bench", help="run a doorway suite")
    s.add_argument("--suite", required=True)
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--csv", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(fn=cmd_door_bench)

    s = sub.add_parser("map", help="run a mapping script, save the session")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_map)

    s = sub.add_parser("navigate", help="navigate a saved map to a goal")
    s.add_argument("--scenario", required=True)
    s.add_argument("--map", default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_navigate)

    s = sub.add_parser("pipeline-bench", help="point-count and timing checks")
    s.add_argument("--csv", default=None)
    s.set_defaults(fn=cmd_pipeline_bench)

    args = p.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
