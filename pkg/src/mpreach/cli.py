"""Command-line entry point covering the whole pipeline.

Subcommands: bound, generate, train, sweep, eval, extrapolate, latent-map,
plot. Each run finishes with a single machine-readable key=value summary
line on stdout and stamps its artifact directory with the resolved config
plus a content-hash manifest.

Exit codes: 0 success; 2 usage or config-schema problems; 3 missing inputs;
4 numerical-stability or convergence failures; anything unexpected escapes
as a traceback (exit 1). Relative --out paths are placed under $MPREACH_OUT
when that variable is set.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace
from pathlib import Path

from ._version import __version__
from .bounds import BoundSpec, bound_ratio, check_under_reach, mpi_lower_bound
from .config import ConfigError, load_run_config
from .datasets import generate, load_dataset, save_dataset, with_seed
from .evaluation import (
    evaluate_extrapolation,
    evaluate_sweep,
    make_surrogate,
    read_sweep_result,
    write_finals_csv,
    write_latent_csv,
    write_summary_csv,
    write_sweep_csv,
)
from .pde_solvers import ConvergenceError, StabilityError
from .plotting import plot_latent_map, plot_per_step, plot_sweep
from .provenance import sha256_file, tree_hash, write_provenance
from .training import (
    TrainingDiverged,
    cell_checkpoint_name,
    load_checkpoint,
    train,
    train_sweep,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4


def _out_dir(raw: str) -> Path:
    root = os.environ.get("MPREACH_OUT")
    path = Path(raw)
    if root and not path.is_absolute():
        path = Path(root) / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def _summary(**fields) -> None:
    print(" ".join(f"{k}={v}" for k, v in fields.items()))


def _parse_int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip() != ""]


def _parse_seeds(text: str) -> list[int]:
    """Either an explicit comma list ("0,4,7") or a count ("3" -> 0,1,2)."""
    if "," in text:
        return _parse_int_list(text)
    return list(range(int(text)))


def cmd_bound(args) -> int:
    spec = BoundSpec(pde_class=args.pde_class, dx=args.dx, c=args.c, dt=args.dt, L=args.length)
    m = mpi_lower_bound(spec)
    fields = {"class": args.pde_class, "dx": args.dx, "ratio": f"{bound_ratio(spec):.6g}", "M": m}
    if args.m is not None:
        fields["model_m"] = args.m
        fields["classification"] = check_under_reach(args.m, spec)
    _summary(**fields)
    return EXIT_OK


def cmd_generate(args) -> int:
    run = load_run_config(args.config)
    spec = run.dataset
    if args.n_sims is not None:
        spec = replace(spec, n_sims=args.n_sims)
    if args.seed is not None:
        spec = with_seed(spec, args.seed)
    out = _out_dir(args.out)
    dataset = generate(spec)
    save_dataset(dataset, out)
    write_provenance(out, seed=spec.seed, resolved_config=run.resolved_text(),
                     extra={"command": "generate", "n_sims": spec.n_sims})
    _summary(command="generate", problem=spec.problem, sims=spec.n_sims,
             dir=out, hash=tree_hash(out))
    return EXIT_OK


def _load_dataset_checked(path: str, problem: str | None = None):
    dataset = load_dataset(path)
    if problem is not None and dataset.spec.problem != problem:
        raise ValueError(
            f"dataset under {path} holds {dataset.spec.problem!r} data, config says {problem!r}"
        )
    return dataset


def cmd_train(args) -> int:
    from .evaluation import dataset_bound_spec

    run = load_run_config(args.config)
    dataset = _load_dataset_checked(args.dataset, run.problem)
    bound = mpi_lower_bound(dataset_bound_spec(dataset.spec, length=run.domain_length))
    m = args.m if args.m is not None else run.mp_steps
    if m is None:
        m = bound
    train_cfg = run.train
    if args.seed is not None:
        train_cfg = replace(train_cfg, seed=args.seed)
    out = _out_dir(args.out)
    ckpt_path = out / cell_checkpoint_name(m, train_cfg.seed)
    report = train(dataset, run.gnn_config(m), train_cfg, ckpt_path)
    with open(out / "train_curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, (tl, vl) in enumerate(zip(report.train_loss, report.val_loss)):
            writer.writerow([epoch, repr(tl), repr(vl)])
    write_provenance(out, seed=train_cfg.seed, resolved_config=run.resolved_text(),
                     extra={"command": "train", "m": m, "bound": bound})
    _summary(command="train", problem=run.problem, m=m, bound=bound,
             checkpoint=ckpt_path, param_count=report.param_count,
             best_epoch=report.best_epoch, final_val_loss=f"{report.final_val_loss:.6e}",
             wall_clock=f"{report.wall_clock:.1f}", sha256=sha256_file(ckpt_path))
    return EXIT_OK


def _write_eval_artifacts(out: Path, result) -> None:
    write_sweep_csv(out / "sweep.csv", result)
    write_finals_csv(out / "finals.csv", result)
    write_summary_csv(out / "summary.csv", result)
    plot_sweep(result, out / "sweep.svg")
    plot_per_step(result, out / "per_step.svg")


def cmd_sweep(args) -> int:
    run = load_run_config(args.config)
    dataset = _load_dataset_checked(args.dataset, run.problem)
    m_list = _parse_int_list(args.m_list) if args.m_list else run.sweep_m
    seeds = _parse_seeds(args.seeds) if args.seeds else run.sweep_seeds
    if not m_list or not seeds:
        raise ConfigError("sweep needs a step-count list and seeds (flags or [sweep] section)")
    out = _out_dir(args.out)
    rows = train_sweep(dataset, run.gnn_config(m_list[0]), m_list, seeds,
                       run.train, out, jobs=args.jobs)
    result = evaluate_sweep(out, dataset, tau=args.tau, length=run.domain_length)
    _write_eval_artifacts(out, result)
    write_provenance(out, seed=run.train.seed, resolved_config=run.resolved_text(),
                     extra={"command": "sweep", "cells": len(rows), "bound": result.bound})
    _summary(command="sweep", problem=run.problem, cells=len(rows), dir=out,
             bound=result.bound, knee=result.knee,
             best_m=min(result.mean_by_m, key=result.mean_by_m.get))
    return EXIT_OK


def cmd_eval(args) -> int:
    dataset = _load_dataset_checked(args.dataset)
    result = evaluate_sweep(args.sweep, dataset, tau=args.tau, length=args.length)
    out = _out_dir(args.out)
    _write_eval_artifacts(out, result)
    write_provenance(out, seed=dataset.spec.seed,
                     extra={"command": "eval", "sweep_dir": args.sweep, "bound": result.bound})
    _summary(command="eval", problem=result.problem, cells=len(result.rows), dir=out,
             bound=result.bound, knee=result.knee)
    return EXIT_OK


def cmd_extrapolate(args) -> int:
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
    run = load_run_config(args.config)
    spec = run.dataset
    if args.n_sims is not None:
        spec = replace(spec, n_sims=args.n_sims)
    report = evaluate_extrapolation(ckpt_path, spec, length=run.domain_length)
    out = _out_dir(args.out)
    with open(out / "extrapolation.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        keys = ["problem", "m", "bound", "classification", "rrmse_mean", "rrmse_std",
                "n_trajectories", "finite"]
        writer.writerow(keys)
        writer.writerow([report[k] for k in keys])
        writer.writerow([])
        writer.writerow(["step", "rrmse"])
        for step, value in enumerate(report["rrmse_per_step"], start=1):
            writer.writerow([step, repr(float(value))])
    write_provenance(out, seed=spec.seed, resolved_config=run.resolved_text(),
                     extra={"command": "extrapolate", "checkpoint": str(ckpt_path)})
    _summary(command="extrapolate", problem=report["problem"], m=report["m"],
             bound=report["bound"], classification=report["classification"],
             rrmse_mean=f"{report['rrmse_mean']:.6e}", finite=report["finite"], dir=out)
    return EXIT_OK


def cmd_latent_map(args) -> int:
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
    ckpt = load_checkpoint(ckpt_path)
    dataset = _load_dataset_checked(args.dataset, ckpt.problem)
    if dataset.spec.grid != ckpt.grid:
        raise ValueError("dataset grid does not match the checkpoint's training grid")
    trajs = dataset.split("test")
    sim = args.sim if args.sim is not None else 0
    if not (0 <= sim < len(trajs)):
        raise ValueError(f"--sim {sim} out of range for {len(trajs)} test trajectories")
    traj = trajs[sim]
    if not (0 <= args.frame < len(traj.snapshots)):
        raise ValueError(f"--frame {args.frame} out of range")
    u = traj.snapshots[args.frame].values
    surrogate = make_surrogate(ckpt)
    umap = surrogate.latent_map(u)
    out = _out_dir(args.out)
    write_latent_csv(out / "latent.csv", ckpt.grid, umap)
    plot_latent_map(ckpt.grid, umap, out / "latent.svg",
                    title=f"{ckpt.problem}, M = {ckpt.cfg.mp_steps}")
    write_provenance(out, seed=dataset.spec.seed,
                     extra={"command": "latent-map", "checkpoint": str(ckpt_path),
                            "sim": sim, "frame": args.frame})
    _summary(command="latent-map", problem=ckpt.problem, m=ckpt.cfg.mp_steps,
             stages=umap.shape[0], u_min=f"{umap.min():.4g}", u_max=f"{umap.max():.4g}",
             dir=out)
    return EXIT_OK


def cmd_plot(args) -> int:
    result = read_sweep_result(args.results)
    out = _out_dir(args.out if args.out else args.results)
    plot_sweep(result, out / "sweep.svg")
    plot_per_step(result, out / "per_step.svg")
    _summary(command="plot", problem=result.problem, figures=2, dir=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpreach",
        description="Physics-guided lower bounds on message-passing depth for "
                    "graph-network PDE surrogates: data generation, training, "
                    "sweeps, and evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("bound", help="compute the message-passing lower bound")
    p.add_argument("--class", "--pde-class", dest="pde_class", required=True,
                   choices=("hyperbolic", "parabolic", "elliptic"))
    p.add_argument("--dx", type=float, required=True, help="grid spacing")
    p.add_argument("--c", type=float, help="wave speed (hyperbolic)")
    p.add_argument("--dt", type=float, help="surrogate time stride (hyperbolic)")
    p.add_argument("--L", dest="length", type=float, help="domain extent (parabolic/elliptic)")
    p.add_argument("--m", type=int, help="classify this model step count against the bound")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("generate", help="generate a dataset from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-sims", type=int, help="override [dataset] n_sims")
    p.add_argument("--seed", type=int, help="override [dataset] seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True, help="generated dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--m", type=int, help="message-passing steps (default: config, then bound)")
    p.add_argument("--seed", type=int, help="override [training] seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train and evaluate a grid of (M, seed) cells")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--M", "--m-list", dest="m_list", help="comma list, e.g. 1,2,4,6")
    p.add_argument("--seeds", help="count (3 means 0,1,2) or comma list")
    p.add_argument("--jobs", type=int, default=1, help="parallel training cells")
    p.add_argument("--tau", type=float, default=0.5, help="saturation tolerance")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="score an existing sweep on a dataset's test split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--sweep", required=True, help="directory holding sweep.ini + checkpoints")
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--length", type=float, help="override the domain extent for the bound")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extrapolate", help="evaluate a checkpoint on a new problem config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True, help="config describing the evaluation domain")
    p.add_argument("--out", required=True)
    p.add_argument("--n-sims", type=int, help="override evaluation simulation count")
    p.set_defaults(func=cmd_extrapolate)

    p = sub.add_parser("latent-map", help="export per-stage relative latent norms")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sim", type=int, help="test-split trajectory index (default 0)")
    p.add_argument("--frame", type=int, default=0, help="input frame within the trajectory")
    p.set_defaults(func=cmd_latent_map)

    p = sub.add_parser("plot", help="re-render figures from evaluation CSVs")
    p.add_argument("--results", required=True, help="directory with sweep/finals/summary CSVs")
    p.add_argument("--out", help="figure output directory (default: results dir)")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        print(f"missing input: {err}", file=sys.stderr)
        return EXIT_MISSING
    except (StabilityError, ConvergenceError, TrainingDiverged) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as err:
        print(f"invalid request: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
