"""Command-line entry points.

Verbs: train, eval, crossplay, ablate, inspect-groups, dump-defaults.
Exit codes: 0 success, 2 config error, 3 compatibility/protocol error,
4 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .algos import ConfigurationError, NumericAbort
from .checkpoint import CheckpointError
from .config import ConfigError, dump_defaults, load_run_config
from .envs import EnvError
from .harness import (CompatibilityError, ProtocolError, ablate, crossplay,
                      evaluate, inspect_groups, run_training,
                      write_ablation_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPAT = 3
EXIT_NUMERIC = 4


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None,
                        help="run config file (key = value lines)")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gtde",
        description="Grouped training with decentralized execution: "
                    "train, evaluate and inspect multi-agent policies.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("train", help="train one run")
    _add_config_args(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint (decentralized execution)")
    p.add_argument("checkpoint")
    p.add_argument("--env", required=True)
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    p.add_argument("--seed", type=int, default=10_000)

    p = sub.add_parser("crossplay", help="pit checkpoint A against checkpoint B")
    p.add_argument("checkpoint_a")
    p.add_argument("checkpoint_b")
    p.add_argument("--env", required=True)
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--mode", choices=("greedy", "sample"), default="sample")
    p.add_argument("--seed", type=int, default=20_000)

    p = sub.add_parser("ablate", help="sweep paradigms x seeds from a base config")
    _add_config_args(p)
    p.add_argument("--paradigms", type=str, required=True,
                   help="comma-separated paradigm list")
    p.add_argument("--seeds", type=str, required=True,
                   help="comma-separated seed list")

    p = sub.add_parser("inspect-groups", help="export group structure of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--env", required=True)
    p.add_argument("--episodes", type=int, default=5)
    p.add_argument("--out-dir", type=str, required=True)
    p.add_argument("--seed", type=int, default=30_000)

    p = sub.add_parser("dump-defaults", help="print every config key and default")
    p.add_argument("--env", type=str, default=None)
    return parser


def _run(args: argparse.Namespace) -> int:
    if args.verb == "train":
        run_cfg = load_run_config(args.config, args.overrides)
        result = run_training(run_cfg)
        final = result["final_record"]
        print(f"run complete: {result['out_dir']}")
        print(f"  metrics:    {result['metrics_jsonl']}")
        print(f"  checkpoint: {result['checkpoint']}")
        if final is not None:
            print(f"  final mean episode reward: {final.mean_episode_reward:.4f}")
        return EXIT_OK

    if args.verb == "eval":
        summary = evaluate(args.checkpoint, args.env, episodes=args.episodes,
                           mode=args.mode, seed=args.seed)
        print(json.dumps(summary.as_dict(), indent=2, sort_keys=True))
        return EXIT_OK

    if args.verb == "crossplay":
        result = crossplay(args.checkpoint_a, args.checkpoint_b, args.env,
                           episodes=args.episodes, mode=args.mode, seed=args.seed)
        print(json.dumps(result, indent=2, sort_keys=True))
        return EXIT_OK

    if args.verb == "ablate":
        run_cfg = load_run_config(args.config, args.overrides)
        paradigms = [x.strip() for x in args.paradigms.split(",") if x.strip()]
        seeds = [int(x) for x in args.seeds.split(",") if x.strip()]
        result = ablate(run_cfg, paradigms, seeds)
        csv_path = Path(run_cfg.out_dir) / "ablation.csv"
        write_ablation_csv(csv_path, result)
        print(json.dumps(result["summary"], indent=2, sort_keys=True))
        print(f"table written to {csv_path}")
        return EXIT_OK

    if args.verb == "inspect-groups":
        summary = inspect_groups(args.checkpoint, args.env, args.episodes,
                                 args.out_dir, seed=args.seed)
        print(json.dumps(summary, indent=2, sort_keys=True))
        return EXIT_OK

    if args.verb == "dump-defaults":
        sys.stdout.write(dump_defaults(args.env))
        return EXIT_OK

    raise AssertionError(f"unhandled verb {args.verb!r}")


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, ConfigurationError, EnvError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (CompatibilityError, ProtocolError, CheckpointError) as err:
        print(f"compatibility error: {err}", file=sys.stderr)
        return EXIT_COMPAT
    except NumericAbort as err:
        print(f"numerical abort: {err}", file=sys.stderr)
        if err.diagnostics.get("path"):
            print(f"diagnostics: {err.diagnostics['path']}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
