"""Command-line entry point.

Subcommands:
  train     train every cell of a job config and write checkpoints/curves
  eval      evaluate existing checkpoints and write results.csv
  sweep     train and evaluate in one pass
  baseline  evaluate the fixed no-learning policy (no checkpoints needed)

All subcommands read a JSON job config (see harness.ExperimentConfig) and
exit 0 on success; failures print one machine-readable JSON line on stderr
and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import CellError, ExperimentConfig, run_job


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="path to a job config JSON")
    p.add_argument("--seed", type=int, default=None,
                   help="replace the config's seed list with this one seed")
    p.add_argument("--out", default=None, help="output directory override")
    p.add_argument("--paper-scale", action="store_true",
                   help="use the full 10,000/5,000 episode budgets")
    p.add_argument("--target-rule", choices=("ddqn", "dqn_max"), default=None,
                   help="bootstrap target rule override")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel cell processes")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.out is not None:
        cfg.out_dir = args.out
    if args.paper_scale:
        cfg.paper_scale = True
    if args.target_rule is not None:
        cfg.target_rule = args.target_rule
    if args.workers is not None:
        cfg.workers = args.workers
    return cfg.validate()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="coexcpm",
        description="NR-U / Wi-Fi coexistence training and evaluation jobs")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("train", "train cells and write checkpoints"),
                            ("eval", "evaluate existing checkpoints"),
                            ("sweep", "train then evaluate"),
                            ("baseline", "evaluate the no-learning policy")):
        _add_common(sub.add_parser(name, help=help_text))
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args)
        if args.command == "baseline":
            cfg.algorithm = "no_learning"
        do_train = args.command in ("train", "sweep")
        do_eval = args.command in ("eval", "sweep", "baseline")
        rows = run_job(cfg, train=do_train, evaluate=do_eval)
        if do_eval:
            print(f"wrote {len(rows)} result rows to {cfg.out_dir}/results.csv")
        else:
            print(f"trained {len(cfg.resolved_sweep()) * len(cfg.seeds)} cells "
                  f"into {cfg.out_dir}/checkpoints")
        return 0
    except CellError as exc:
        print(json.dumps({"error": "cell_failed", "cell": exc.cell,
                          "reason": exc.reason}), file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "reason": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
