"""Command line entry point.

Exit codes: 0 success, 1 error, 2 a benchmark assertion failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import (
    FLY_ROLL_COLUMNS, PLANNING_COLUMNS, SUMMARY_COLUMNS, TRACKING_COLUMNS, BenchConfig,
    bench_fly_vs_roll, bench_planning, bench_tracking, lemniscate, map_spec, trial_seeds, write_csv,
)
from .common import Mode
from .config import build, load_config
from .control import Controller
from .envmap import MapSpec
from .planner import plan
from .search import KinoState
from .sim import run_episode
from .trajopt import BSplineTrajectory, TrajoptParams

logger = logging.getLogger("hybridnav")

EXIT_OK, EXIT_ERROR, EXIT_ASSERT = 0, 1, 2


def _common(p):
    p.add_argument("--config", type=Path, help="JSON or TOML config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", type=Path, default=Path("out"))
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--parallel", type=int, default=1, help="worker processes for trials")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridnav", description="Terrestrial-aerial planning, tracking and benchmarks")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-map", help="write a seeded random map")
    _common(p)
    p.add_argument("--corridor", action="store_true", help="ground corridor instead of a barricade")

    p = sub.add_parser("plan", help="plan a trajectory on a map")
    _common(p)
    p.add_argument("--map", type=Path, help="map JSON (default: generate from --seed)")
    p.add_argument("--start", type=float, nargs=3)
    p.add_argument("--goal", type=float, nargs=3)

    p = sub.add_parser("track", help="run the closed loop on a trajectory")
    _common(p)
    p.add_argument("--trajectory", type=Path, help="trajectory JSON (default: lemniscate)")
    p.add_argument("--velocity", type=float, default=1.0, help="lemniscate speed when no trajectory is given")
    p.add_argument("--fixed-thrust", type=float, default=None, help="constant terrestrial thrust baseline")

    for name, text in (("bench-plan", "planning benchmark"), ("bench-track", "tracking benchmark"),
                       ("bench-mode", "rolling vs flying comparison")):
        p = sub.add_parser(name, help=text)
        _common(p)
    return ap


def _bench_config(args, cfg) -> BenchConfig:
    return BenchConfig.from_config(cfg, seed=args.seed, trials=args.trials)


def _write_text(path: Path, text: str) -> None:
    path.write_text(text + "\n")
    print(text)


def cmd_gen_map(args, cfg) -> int:
    bc = _bench_config(args, cfg)
    if args.corridor:
        bc.barricade = False
    spec = map_spec(trial_seeds(bc.seed, 1)[0], bc)
    spec.save(args.out_dir / "map.json")
    if not args.no_plots:
        from .plotting import plot_map

        grid, _ = spec.build()
        plot_map(grid, args.out_dir / "map.png", start=spec.start, goal=spec.goal)
    print(f"map with {len(spec.obstacles)} obstacles written to {args.out_dir / 'map.json'}")
    return EXIT_OK


def cmd_plan(args, cfg) -> int:
    bc = _bench_config(args, cfg)
    spec = MapSpec.load(args.map) if args.map else map_spec(trial_seeds(bc.seed, 1)[0], bc)
    start = np.asarray(args.start if args.start else (spec.start if spec.start is not None else bc.start), dtype=float)
    goal = np.asarray(args.goal if args.goal else (spec.goal if spec.goal is not None else bc.goal), dtype=float)
    grid, esdf = spec.build()
    mode = Mode.TERRESTRIAL if start[2] <= 0.0 else Mode.AERIAL
    res = plan(KinoState(start, np.zeros(3), mode), goal, grid, esdf, bc.search_params(),
               build(TrajoptParams, bc.trajopt, v_max=bc.v_max, a_max=bc.a_max),
               search_margin=bc.search_margin)
    out = args.out_dir
    (out / "search.json").write_text(json.dumps(res.search.to_dict(), indent=2))
    lines = [f"search: {res.search.status.value}, {res.search.expanded_nodes} expansions, "
             f"{res.search.elapsed * 1e3:.1f} ms"]
    if res.trajectory is not None:
        res.trajectory.save(out / "trajectory.json")
        rep = res.report
        if rep is not None:
            write_csv(out / "cost_report.csv", [rep.as_row()], list(rep.as_row()))
        lines += [
            f"trajectory: {res.trajectory.duration:.2f} s, min clearance {res.min_clearance:.3f} m, "
            f"int |a|^2 dt {res.trajectory.integral_sq_acc():.2f} (search only {res.search.integral_sq_acc():.2f})",
            f"aerial segment: {'yes' if res.search.has_aerial else 'no'}; total time {res.elapsed * 1e3:.1f} ms",
        ]
    _write_text(out / "summary.txt", "\n".join(lines))
    if not args.no_plots:
        from .plotting import plot_map

        plot_map(grid, out / "plan.png", res.trajectory, res.search, start, goal)
    return EXIT_OK if res.success else EXIT_ERROR


def cmd_track(args, cfg) -> int:
    bc = _bench_config(args, cfg)
    if args.trajectory:
        traj = BSplineTrajectory.load(args.trajectory)
    else:
        traj = lemniscate(bc.lemniscate_scale, args.velocity, bc.lemniscate_knot)
    gains = bc.control_gains()
    trace, m = run_episode(traj, Controller(gains, fixed_thrust=args.fixed_thrust), bc.plant_params(gains))
    out = args.out_dir
    trace.to_csv(out / "trace.csv")
    m.to_json(out / "metrics.json")
    _write_text(out / "summary.txt", f"episode {m.status}: E_a {m.E_a:.4f} m, E_m {m.E_m:.4f} m, T_n {m.T_n:.4f}, "
                                     f"energy proxy {m.energy_proxy:.3f}")
    if not args.no_plots:
        from .plotting import plot_trace

        plot_trace(trace, out / "trace.png")
    return EXIT_OK if m.status == "ok" else EXIT_ERROR


def _finish(out: Path, text: str, failures: list) -> int:
    if failures:
        text += "\nFAILED:\n" + "\n".join(f"  {f}" for f in failures)
    else:
        text += "\nall benchmark assertions hold"
    _write_text(out / "summary.txt", text)
    return EXIT_ASSERT if failures else EXIT_OK


def cmd_bench_plan(args, cfg) -> int:
    bc = _bench_config(args, cfg)
    rep = bench_planning(bc, parallel=args.parallel)
    write_csv(args.out_dir / "trials.csv", rep.rows, PLANNING_COLUMNS)
    write_csv(args.out_dir / "summary.csv", rep.summary, SUMMARY_COLUMNS)
    if not args.no_plots:
        from .plotting import plot_planning

        plot_planning(rep.rows, args.out_dir / "planning.png")
    return _finish(args.out_dir, rep.text(), rep.check())


def cmd_bench_track(args, cfg) -> int:
    bc = _bench_config(args, cfg)
    rep = bench_tracking(bc)
    write_csv(args.out_dir / "tracking.csv", rep.rows, TRACKING_COLUMNS)
    if not args.no_plots:
        from .plotting import plot_tracking

        plot_tracking(rep, args.out_dir / "tracking.png")
    return _finish(args.out_dir, rep.text(), rep.check())


def cmd_bench_mode(args, cfg) -> int:
    bc = _bench_config(args, cfg)
    rep = bench_fly_vs_roll(bc)
    write_csv(args.out_dir / "fly_vs_roll.csv", rep.rows, FLY_ROLL_COLUMNS)
    if not args.no_plots:
        from .plotting import plot_fly_roll

        plot_fly_roll(rep, args.out_dir / "fly_vs_roll.png")
    return _finish(args.out_dir, rep.text(), rep.check())


COMMANDS = {
    "gen-map": cmd_gen_map,
    "plan": cmd_plan,
    "track": cmd_track,
    "bench-plan": cmd_bench_plan,
    "bench-track": cmd_bench_track,
    "bench-mode": cmd_bench_mode,
}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        args.out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg)
    except Exception as exc:  # noqa: BLE001
        if args.verbose:
            logger.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
