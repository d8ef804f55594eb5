"""Command line interface: train, eval, compare, plot."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .checkpoint import CheckpointError, PolicyCheckpoint
from .harness import (HarnessError, compare, compute_metrics, plot_run_dir,
                      run_episode, save_train_outputs, train_controller)
from .ppo import PpoConfig
from .scenarios import (BUILTIN_IDS, ControllerChoice, ScenarioError,
                        ScenarioSpec, load_scenario)
from .terrain import PlantFault

EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_PLANT = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="terratrack",
        description="Speed-tracking control laboratory on deformable terrain")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a learned controller")
    p_train.add_argument("--controller", required=True, choices=("ac", "ac2mpc"))
    p_train.add_argument("--scenario", default="1A",
                         help="built-in id or scenario file (default 1A)")
    p_train.add_argument("--budget", type=int, required=True,
                         help="environment step budget")
    p_train.add_argument("--workers", type=int, default=1)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--force", action="store_true",
                         help="allow training scenarios outside the standard protocol")

    p_eval = sub.add_parser("eval", help="run one episode and report metrics")
    p_eval.add_argument("--scenario", required=True)
    p_eval.add_argument("--controller", required=True, choices=("mpc", "ac", "ac2mpc"))
    p_eval.add_argument("--checkpoint", default=None)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", required=True)

    p_cmp = sub.add_parser("compare", help="metrics table over scenarios and controllers")
    p_cmp.add_argument("--scenarios", default=",".join(BUILTIN_IDS),
                       help="comma-separated built-in ids")
    p_cmp.add_argument("--controllers", default="mpc,ac,ac2mpc")
    p_cmp.add_argument("--checkpoints", default=None,
                       help="directory holding <kind>_final.json checkpoints")
    p_cmp.add_argument("--seed", type=int, default=0)
    p_cmp.add_argument("--out", required=True)

    p_plot = sub.add_parser("plot", help="regenerate SVG plots from a run directory")
    p_plot.add_argument("--run", required=True)
    return parser


def _cmd_train(args) -> int:
    spec = load_scenario(args.scenario)
    cfg = PpoConfig(seed=args.seed)
    result = train_controller(args.controller, spec, args.budget,
                              workers=args.workers, seed=args.seed,
                              allow_any_scenario=args.force, ppo_config=cfg,
                              progress=lambda s, r: print(
                                  f"[{args.controller}] steps={s} mean_episode_reward={r:.3f}"))
    paths = save_train_outputs(result, args.controller, args.out)
    print(f"wrote {paths['curve']}")
    print(f"wrote {paths['final']}")
    return 0


def _cmd_eval(args) -> int:
    spec = load_scenario(args.scenario)
    controller = ControllerChoice(args.controller, args.checkpoint)
    spec = ScenarioSpec(id=spec.id, terrain=spec.terrain, vehicle=spec.vehicle,
                        path_length=spec.path_length, profile=spec.profile,
                        episode_steps=spec.episode_steps, seed=args.seed,
                        controller=controller)
    record = run_episode(spec)
    if record.fault:
        print(f"plant fault: {record.fault}", file=sys.stderr)
        return EXIT_PLANT
    metrics = compute_metrics(record)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, f"{spec.id}_{args.controller}.csv")
    record.to_csv(csv_path)
    payload = {"scenario": spec.id, "controller": args.controller,
               "delta_v_rms": metrics.delta_v_rms, "rms_jerk": metrics.rms_jerk}
    with open(os.path.join(args.out, f"{spec.id}_{args.controller}_metrics.json"),
              "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"delta_v_rms={metrics.delta_v_rms:.4f} m/s  "
          f"rms_jerk={metrics.rms_jerk:.4f} m/s^3")
    print(f"wrote {csv_path}")
    return 0


def _cmd_compare(args) -> int:
    scenario_ids = [s.strip() for s in args.scenarios.split(",") if s.strip()]
    controllers = [c.strip() for c in args.controllers.split(",") if c.strip()]
    report = compare(scenario_ids, controllers, args.checkpoints, args.out,
                     seed=args.seed)
    header = f"{'scenario':<10}{'controller':<12}{'delta_v_rms':>12}{'rms_jerk':>12}"
    print(header)
    print("-" * len(header))
    for row in report["rows"]:
        if row.get("skipped"):
            print(f"{row['scenario']:<10}{row['controller']:<12}"
                  f"{'-- ' + row['skipped']:>24}")
            continue
        star = " *" if row.get("best") else ""
        print(f"{row['scenario']:<10}{row['controller']:<12}"
              f"{row['delta_v_rms']:>12.4f}{row['rms_jerk']:>12.4f}{star}")
    print(f"wrote {os.path.join(args.out, 'metrics.json')}")
    return 0


def _cmd_plot(args) -> int:
    written = plot_run_dir(args.run)
    for path in written:
        print(f"wrote {path}")
    if not written:
        print("no CSV files found", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"train": _cmd_train, "eval": _cmd_eval,
                "compare": _cmd_compare, "plot": _cmd_plot}
    try:
        return handlers[args.command](args)
    except (ScenarioError, CheckpointError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except HarnessError as exc:
        print(f"solver/harness error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except PlantFault as exc:
        print(f"plant fault: {exc}", file=sys.stderr)
        return EXIT_PLANT


if __name__ == "__main__":
    sys.exit(main())
