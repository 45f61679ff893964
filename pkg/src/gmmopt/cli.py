"""gmm-opt command line.

    gmm-opt cluster run --config exp.cfg [--eta 0.02 --selector walk ...]
    gmm-opt lssvm run --config exp.cfg [--selector multifold ...]
    gmm-opt sweep --etas 0.02,0.1,0.5,1.0 --config exp.cfg
    gmm-opt gen gmm200|gmm20|latent-shift --out file.csv [--seed S]

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import sys

from . import data, harness
from .engine import ConfigError, GmmError


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--dataset")
    p.add_argument("--selector", choices=harness.SELECTOR_NAMES)
    p.add_argument("--eta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--init")
    p.add_argument("--k", type=int)
    p.add_argument("--walk-steps", type=int, dest="walk_steps")
    p.add_argument("--folds", type=int)
    p.add_argument("--respawn-dead", action="store_const", const=True,
                   default=None, dest="respawn_dead")
    p.add_argument("--workers", type=int)
    p.add_argument("--data-seed", type=int, dest="data_seed")
    p.add_argument("--task-n", type=int, dest="task_n")
    p.add_argument("--task-labels", type=int, dest="task_labels")
    p.add_argument("--task-shift", type=float, dest="task_shift")
    p.add_argument("--task-noise", type=float, dest="task_noise")
    p.add_argument("--task-lambda", type=float, dest="task_lambda")


_RUN_FIELDS = ("dataset", "selector", "eta", "epsilon", "max_iters", "trials",
               "seed", "out", "init", "k", "walk_steps", "folds",
               "respawn_dead", "workers", "data_seed", "task_n", "task_labels",
               "task_shift", "task_noise", "task_lambda")


def _build_cfg(args, problem: str) -> harness.ExperimentConfig:
    file_values = harness.parse_config_file(args.config) if args.config else {}
    file_values.setdefault("problem", problem)
    file_values["problem"] = problem
    overrides = {name: getattr(args, name) for name in _RUN_FIELDS}
    if problem == "latent-svm":
        file_values.setdefault("dataset", "latent-shift")
        file_values.setdefault("init", "random")
    return harness.build_config(file_values, overrides)


def _cmd_run(args, problem: str) -> int:
    cfg = _build_cfg(args, problem)
    stats = harness.run_experiment(cfg)
    print(harness.compare_report([stats]))
    if cfg.out:
        print(f"artifacts written to {cfg.out}")
    return 0


def _cmd_sweep(args) -> int:
    problem = args.problem
    cfg = _build_cfg(args, problem)
    etas = [float(v) for v in args.etas.split(",") if v]
    per_eta = harness.sweep_eta(cfg, etas)
    for eta in sorted(per_eta):
        s = per_eta[eta]
        print(f"eta={eta:g}: mean={s.mean:.6g} std={s.std:.6g} best={s.best:.6g} "
              f"iters={s.mean_iters:.2f}")
    if cfg.out:
        print(f"sweep CSV written to {cfg.out}/sweep.csv")
    return 0


def _cmd_gen(args) -> int:
    import dataclasses
    if args.kind in ("gmm20", "gmm200"):
        spec = dataclasses.replace(
            data.GMM20 if args.kind == "gmm20" else data.GMM200, seed=args.seed)
        dataset, labels = data.gen_mixture(spec)
        data.dump_points_csv(args.out, dataset.points, labels)
        print(f"{args.kind}: {dataset.n} points, dim {dataset.dim} -> {args.out}")
        return 0
    problem, truth = data.gen_latent_shift_task(
        args.task_n, args.task_labels, args.task_shift, args.task_noise,
        args.seed, lam=args.task_lambda)
    data.dump_latent_shift_csv(args.out, truth)
    print(f"latent-shift: {problem.n} examples, {problem.label_count} labels "
          f"-> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmm-opt",
                                     description="bound-optimization experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("cluster", "lssvm"):
        p = sub.add_parser(name, help=f"{name} experiments")
        s = p.add_subparsers(dest="action", required=True)
        runp = s.add_parser("run", help="run seeded trials")
        _add_run_flags(runp)

    sweep = sub.add_parser("sweep", help="progress-coefficient sweep")
    sweep.add_argument("--etas", required=True, help="comma-separated values")
    sweep.add_argument("--problem", choices=("clustering", "latent-svm"),
                       default="clustering")
    _add_run_flags(sweep)

    gen = sub.add_parser("gen", help="write a synthetic dataset as CSV")
    gen.add_argument("kind", choices=("gmm200", "gmm20", "latent-shift"))
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--task-n", type=int, default=33, dest="task_n")
    gen.add_argument("--task-labels", type=int, default=3, dest="task_labels")
    gen.add_argument("--task-shift", type=float, default=1.0, dest="task_shift")
    gen.add_argument("--task-noise", type=float, default=0.1, dest="task_noise")
    gen.add_argument("--task-lambda", type=float, default=0.4, dest="task_lambda")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "cluster":
            return _cmd_run(args, "clustering")
        if args.command == "lssvm":
            return _cmd_run(args, "latent-svm")
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "gen":
            return _cmd_gen(args)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (GmmError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
