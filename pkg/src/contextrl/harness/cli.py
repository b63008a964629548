"""Command line front end.

Subcommands:
  train              meta-train a model and checkpoint it
  test               adapt a checkpoint to held-out tasks and report returns
  ablate             run one of the preset comparison studies
  export-embeddings  dump per-task context vectors to CSV
  check              gradient and information-bound verification battery

Exit codes: 0 success, 1 configuration problem, 2 numerical problem
(including any failed verification check).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from ..context.encoder import export_embeddings
from ..envs import load_tasks, sample_tasks
from ..errors import ConfigurationError, NumericError
from .ablate import PRESETS, ablate
from .checks import format_results, self_check
from .config import RunConfig, apply_overrides, load_config
from .loops import collect_embedding_batches, evaluate, load_learner, meta_train


class _Parser(argparse.ArgumentParser):
    """Argparse that reports usage problems as configuration errors."""

    def error(self, message):  # exit code 1, not argparse's default 2
        raise ConfigurationError(message)


def _add_config_flags(parser: argparse.ArgumentParser) -> list[str]:
    """One override flag per config field; returns the field names."""
    names = []
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, dest=f.name, metavar="VALUE", default=None)
        names.append(f.name)
    return names


def _build_config(args, field_names: list[str]) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {
        name: getattr(args, name)
        for name in field_names
        if getattr(args, name) is not None
    }
    return apply_overrides(cfg, overrides)


def build_parser() -> _Parser:
    parser = _Parser(prog="contextrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="meta-train and checkpoint a model")
    p_train.add_argument("--config", default=None, help="key = value config file")
    p_train.add_argument("--quiet", action="store_true", help="suppress progress lines")
    _add_config_flags(p_train)

    p_test = sub.add_parser("test", help="evaluate a checkpoint on held-out tasks")
    p_test.add_argument("--checkpoint", required=True, help="run directory to load")
    p_test.add_argument("--explore-episodes", type=int, default=None)
    p_test.add_argument("--execution-episodes", type=int, default=None)
    p_test.add_argument("--context-update", choices=("step", "episode"), default=None)
    p_test.add_argument("--seed", type=int, default=None, help="evaluation seed key")
    p_test.add_argument("--tasks", type=int, default=None, help="sample this many fresh test tasks")
    p_test.add_argument("--task-file", default=None, help="evaluate tasks from this file")
    p_test.add_argument("--ood", action="store_true", help="sample out-of-distribution tasks")
    p_test.add_argument("--out", default=None, help="write the JSON report here")

    p_ablate = sub.add_parser("ablate", help="run a preset comparison study")
    p_ablate.add_argument("--preset", required=True, choices=PRESETS)
    p_ablate.add_argument("--config", default=None, help="base config file")
    _add_config_flags(p_ablate)

    p_embed = sub.add_parser("export-embeddings", help="write context vectors to CSV")
    p_embed.add_argument("--checkpoint", required=True)
    p_embed.add_argument("--out", required=True, help="CSV destination")
    p_embed.add_argument("--episodes", type=int, default=2)
    p_embed.add_argument("--seed", type=int, default=None, help="collection seed key")
    p_embed.add_argument("--role", choices=("train", "test"), default="test")

    p_check = sub.add_parser("check", help="run the verification battery")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument(
        "--corrupt",
        choices=("critic", "actor", "encoder"),
        default=None,
        help="deliberately damage one gradient to prove detection works",
    )
    return parser


def _cmd_train(args) -> int:
    field_names = [f.name for f in dataclasses.fields(RunConfig)]
    cfg = _build_config(args, field_names)

    def log(record):
        eval_part = (
            f"  eval {record['eval_mean_return']:.3f}"
            if "eval_mean_return" in record
            else ""
        )
        print(
            f"iter {record['iteration']:4d} [{record['phase']}]"
            f"  explore {record['explore_return_mean']:.3f}"
            f"  execute {record['execute_return_mean']:.3f}"
            f"  bonus {record['intrinsic_mean']:.3f}{eval_part}"
        )

    out = meta_train(cfg, log=None if args.quiet else log)
    final = out["final_eval"]
    print(
        f"final mean return {final['mean_return']:.4f}"
        f" (std {final['std_return']:.4f}) over {len(final['returns'])} tasks"
    )
    print(f"checkpoint and metrics written to {cfg.out_dir}")
    return 0


def _pick_tasks(args, learner):
    if args.tasks is not None and args.task_file is not None:
        raise ConfigurationError("--tasks and --task-file are mutually exclusive")
    if args.task_file is not None:
        return load_tasks(args.task_file)
    if args.tasks is not None:
        seed = args.seed if args.seed is not None else learner.cfg.seed
        return sample_tasks(
            learner.cfg.env_family, args.tasks, seed, role="test", ood=args.ood
        )
    if args.ood:
        return sample_tasks(
            learner.cfg.env_family,
            learner.cfg.test_tasks,
            args.seed if args.seed is not None else learner.cfg.seed,
            role="test",
            ood=True,
        )
    return learner.test_tasks


def _cmd_test(args) -> int:
    learner = load_learner(args.checkpoint)
    tasks = _pick_tasks(args, learner)
    seed_key = args.seed if args.seed is not None else learner.cfg.seed
    report = evaluate(
        learner,
        tasks,
        seed_key=seed_key,
        explore_episodes=args.explore_episodes,
        execution_episodes=args.execution_episodes,
        context_update=args.context_update,
    )
    report["checkpoint"] = args.checkpoint
    report["seed"] = seed_key
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    print(
        f"mean return {report['mean_return']:.4f}"
        f" (std {report['std_return']:.4f}) over {len(tasks)} tasks"
    )
    return 0


def _cmd_ablate(args) -> int:
    field_names = [f.name for f in dataclasses.fields(RunConfig)]
    cfg = _build_config(args, field_names)
    summary = ablate(args.preset, cfg)
    for name, row in summary["variants"].items():
        print(f"{name:24s} mean return {row['mean_return']:.4f}")
    print(f"summary written under {cfg.out_dir}")
    return 0


def _cmd_export(args) -> int:
    learner = load_learner(args.checkpoint)
    tasks = learner.test_tasks if args.role == "test" else learner.train_tasks
    seed_key = args.seed if args.seed is not None else learner.cfg.seed
    batches = collect_embedding_batches(learner, tasks, args.episodes, seed_key)
    export_embeddings(
        args.out, learner.enc_spec, learner.trainer.encoder_params(), batches
    )
    print(f"wrote {len(batches)} embeddings to {args.out}")
    return 0


def _cmd_check(args) -> int:
    results = self_check(seed=args.seed, corrupt=args.corrupt)
    print(format_results(results))
    if any(not r.passed for r in results):
        raise NumericError("verification battery reported failures")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "train": _cmd_train,
            "test": _cmd_test,
            "ablate": _cmd_ablate,
            "export-embeddings": _cmd_export,
            "check": _cmd_check,
        }[args.command]
        return handler(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
