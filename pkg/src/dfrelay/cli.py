"""Command-line entry point: train, evaluate, verify, print-config.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Every command is
deterministic under a fixed seed in single-worker mode, and all outputs
land under the directory given with --out.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, apply_overrides, load_scenario, scenario_from_dict
from .baselines import train_ddpg, train_dqn, train_random
from .evaluation import (agent_from_networks, compare_methods, evaluate_agent,
                         evaluate_model, load_checkpoint, networks_for_result,
                         save_checkpoint, write_curves_csv, write_eval_episodes_csv,
                         write_train_evals_csv, write_train_metrics_csv)
from .nets import CheckpointError
from .bounds import sweep_lemma1, sweep_lemma2, sweep_theorem1
from .ppo import train_ppo, train_robust
from .runtime import build_runtime

_SUITE_DEFAULTS = {"lemma1": 10_000, "lemma2": 1_000, "theorem1": 200}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def build_parser() -> _Parser:
    parser = _Parser(prog="dfrelay",
                     description="Robust RL for relay selection and power "
                                 "allocation in two-hop DF relay networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a method on a scenario")
    train.add_argument("--scenario", required=True, help="scenario JSON file")
    train.add_argument("--method", required=True,
                       choices=("robust", "ppo", "dqn", "ddpg", "random"))
    train.add_argument("--seed", type=int, action="append",
                       help="run seed; repeat the flag for multi-seed runs")
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--workers", type=int, default=1,
                       help="rollout parallelism (results are seed-deterministic "
                            "regardless)")
    train.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="override a config key")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="evaluate a frozen checkpoint")
    ev.add_argument("--checkpoint", required=True, help="checkpoint directory")
    ev.add_argument("--episodes", type=int, default=None)
    ev.add_argument("--format", choices=("table", "csv"), default="table")
    ev.add_argument("--out", default=None, help="optional output directory")
    ev.set_defaults(func=cmd_evaluate)

    ver = sub.add_parser("verify", help="run the bound-verification sweeps")
    ver.add_argument("--suite", choices=("lemma1", "lemma2", "theorem1", "all"),
                     default="all")
    ver.add_argument("--instances", type=int, default=None,
                     help="instances per suite (defaults: lemma1 10000, "
                          "lemma2 1000, theorem1 200)")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--out", default=None, help="optional output directory")
    ver.set_defaults(func=cmd_verify)

    pc = sub.add_parser("print-config", help="print the resolved scenario")
    pc.add_argument("--scenario", required=True)
    pc.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="SECTION.KEY=VALUE")
    pc.set_defaults(func=cmd_print_config)
    return parser


def _resolve_scenario(path: str, overrides: list[str]):
    scenario_path = Path(path)
    if not scenario_path.exists():
        raise FileNotFoundError(f"scenario file not found: {scenario_path}")
    data = json.loads(scenario_path.read_text())
    if overrides:
        data = apply_overrides(data, overrides)
    return scenario_from_dict(data)


_TRAINERS = {"robust": train_robust, "ppo": train_ppo, "dqn": train_dqn,
             "ddpg": train_ddpg, "random": train_random}


def cmd_train(args) -> int:
    config = _resolve_scenario(args.scenario, args.overrides)
    runtime = build_runtime(config)
    seeds = args.seed if args.seed else [0]
    out_root = Path(args.out)

    protocol = config.protocol
    eval_stride = max(1, config.rl.u_max // protocol.train_eval_points)
    for seed in seeds:
        run_dir = out_root / f"{args.method}_seed{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        snapshots = []

        def on_episode(u, agent, row):
            if (u + 1) % eval_stride == 0 or u + 1 == config.rl.u_max:
                snap = evaluate_agent(agent, runtime, runtime.grid.train_ids,
                                      protocol.train_eval_episodes,
                                      seed=(seed, "train-eval", u),
                                      mode=protocol.mode)
                snapshots.append((u, snap.avg["mean"], snap.worst["mean"]))

        trainer = _TRAINERS[args.method]
        if args.method in ("robust", "ppo"):
            result = trainer(runtime, seed, workers=args.workers,
                             on_episode=on_episode)
        else:
            result = trainer(runtime, seed, on_episode=on_episode)

        write_train_metrics_csv(run_dir / "train_metrics.csv", result.metrics)
        write_curves_csv(run_dir / "curves.csv", result.metrics, args.method, seed)
        write_train_evals_csv(run_dir / "train_evals.csv", snapshots)
        save_checkpoint(run_dir / "checkpoint", runtime,
                        networks_for_result(result), args.method, seed)

        summary = evaluate_model(result.agent, runtime, seed=seed)
        write_eval_episodes_csv(run_dir / "evaluation.csv", summary)
        table, csv_text = compare_methods([(args.method, summary)])
        (run_dir / "summary.csv").write_text(csv_text)
        print(f"# {args.method} seed {seed} (config {config.config_hash()})")
        print(table)
    return 0


def cmd_evaluate(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    agent = agent_from_networks(bundle.method, bundle.nets, bundle.runtime)
    summary = evaluate_model(agent, bundle.runtime, seed=bundle.seed,
                             episodes=args.episodes)
    table, csv_text = compare_methods([(bundle.method, summary)])
    if args.format == "csv":
        print(csv_text, end="")
    else:
        print(table)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_eval_episodes_csv(out_dir / "evaluation.csv", summary)
        (out_dir / "summary.csv").write_text(csv_text)
    return 0


def cmd_verify(args) -> int:
    if args.instances is not None and args.instances < 1:
        raise UsageError("--instances must be >= 1")
    suites = ("lemma1", "lemma2", "theorem1") if args.suite == "all" else (args.suite,)
    runners = {"lemma1": sweep_lemma1, "lemma2": sweep_lemma2,
               "theorem1": sweep_theorem1}
    reports = []
    for suite in suites:
        n = args.instances if args.instances is not None else _SUITE_DEFAULTS[suite]
        reports.append(runners[suite](n, args.seed))
    lines = [r.render() for r in reports]
    print("\n".join(lines))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "verify_report.txt").write_text("\n".join(lines) + "\n")
        rows = ["suite,instances,violations,min_margin"]
        rows += [f"{r.suite},{r.instances},{r.violations},{repr(r.min_margin)}"
                 for r in reports]
        (out_dir / "verify_report.csv").write_text("\n".join(rows) + "\n")
    return 0 if all(r.ok() for r in reports) else 2


def cmd_print_config(args) -> int:
    config = _resolve_scenario(args.scenario, args.overrides)
    print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    return 0


class UsageError(ValueError):
    pass


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
