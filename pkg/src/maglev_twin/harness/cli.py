"""Command-line entry point for the simulation harness."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from ..fieldgrid import load_or_build_grid
from ..geometry import Pose
from ..sensing import default_rig, estimate_pose, forward_measure
from .capability import capability_map
from .config import Config, build_coils, load_config
from .scenario import load_script, run_scenario
from .server import serve

DEFAULT_GRID_CACHE = "fieldgrid.npz"


def _config(args) -> Config:
    return load_config(args.config) if args.config else Config()


def cmd_run(args) -> int:
    config = _config(args)
    if args.seed is not None:
        config = Config(**{**config.__dict__, "seed": args.seed})
    script = load_script(args.scenario)
    report = run_scenario(config, script, args.out)
    json.dump(report.to_dict(), sys.stdout, indent=2)
    print()
    if report.safe_stopped != script.expect_safe_stop:
        print("error: unexpected safe-stop state", file=sys.stderr)
        return 1
    return 0


def cmd_serve(args) -> int:
    serve(_config(args), args.port)
    return 0


def cmd_capability(args) -> int:
    config = _config(args)
    heights = [float(h) for h in args.heights]
    capability_map(config, heights, args.step, out_path=args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_build_grids(args) -> int:
    config = _config(args)
    cache = config.grid.cache_path or DEFAULT_GRID_CACHE
    coil = build_coils(config)[0]
    load_or_build_grid(coil, config.grid.resolution, cache)
    print(f"grid cached at {cache}")
    return 0


def cmd_estimate_bench(args) -> int:
    config = _config(args)
    rig = default_rig(args.noise)
    rng = np.random.default_rng(config.seed)
    truth = Pose(np.array([0.0, 0.0, 0.025]))
    errors = np.empty(args.trials)
    iters = np.empty(args.trials)
    for k in range(args.trials):
        readings = forward_measure(truth, rig, rng)
        est = estimate_pose(readings, truth, rig)
        errors[k] = np.linalg.norm(est.pose.position - truth.position)
        iters[k] = est.iterations
    rms = float(np.sqrt(np.mean(errors ** 2)))
    print(json.dumps({"trials": args.trials, "noise_std": args.noise,
                      "rms_position_error": rms,
                      "max_position_error": float(errors.max()),
                      "mean_iterations": float(iters.mean())}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maglev-twin",
        description="Magnetic-levitation haptic interface simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a scenario script")
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="run the telemetry/command service")
    p.add_argument("--config", default=None)
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("capability", help="map the force/hover workspace")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="capability.csv")
    p.add_argument("--heights", nargs="+", type=float,
                   default=[0.01, 0.02, 0.03, 0.04])
    p.add_argument("--step", type=float, default=0.02)
    p.set_defaults(func=cmd_capability)

    p = sub.add_parser("build-grids", help="precompute the field grid cache")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_build_grids)

    p = sub.add_parser("estimate-bench",
                       help="Monte Carlo pose estimation benchmark")
    p.add_argument("--config", default=None)
    p.add_argument("--noise", type=float, default=1.0e-5)
    p.add_argument("--trials", type=int, default=1000)
    p.set_defaults(func=cmd_estimate_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
