"""One-step supervised training of the graph surrogate.

Pairs are (normalized u_n, normalized forward difference) for time-dependent
problems and (normalized rho, normalized u) for the steady case. Batches of
windows are packed into one block-diagonal graph so the whole step is a
handful of matrix products. Three independent RNG streams (init, shuffle,
noise) hang off the training seed; the init stream never sees the step count,
so models differing only in mp_steps start from identical weights.
"""

from __future__ import annotations

import configparser
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._version import __version__
from .datasets import Dataset, NormStats, normalize, pair_arrays
from .gnn import (
    GnnConfig,
    GnnParams,
    gnn_backward,
    gnn_forward,
    init_gnn,
    load_model,
    node_features,
    params_from_arrays,
    params_to_arrays,
    replicate_topology,
    save_model,
)
from .grid import GridSpec, build_grid_graph, build_node_mask
from .nn import adam_init, adam_step
from .pde_solvers import PhysicalConstants

PRECISIONS = {"float32": np.float32, "float64": np.float64}


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; almost always a too-aggressive learning rate."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    lr: float = 1e-3
    lr_decay: float = 0.5
    seed: int = 0
    noise_std: float = 1e-3
    precision: str = "float32"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr <= 0 or not (0 < self.lr_decay <= 1):
            raise ValueError("need lr > 0 and 0 < lr_decay <= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {sorted(PRECISIONS)}")


@dataclass
class TrainReport:
    train_loss: list[float]
    val_loss: list[float]
    wall_clock: float
    checkpoint_path: str
    param_count: int
    best_epoch: int
    final_train_loss: float
    final_val_loss: float


def make_pairs(dataset: Dataset, split: str = "train") -> tuple[np.ndarray, np.ndarray]:
    """Normalized supervised pairs, shapes (n_windows, n_nodes, n_channels)."""
    trajs = dataset.split(split)
    if not trajs:
        raise ValueError(f"split {split!r} is empty")
    problem = dataset.spec.problem
    xs, ys = [], []
    for traj in trajs:
        x, y = pair_arrays(problem, traj)
        xs.append(normalize(x, dataset.input_stats))
        ys.append(normalize(y, dataset.target_stats))
    return np.concatenate(xs), np.concatenate(ys)


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Stepwise-exponential schedule: decay at each third of the run."""
    stage = min(2, (3 * epoch) // cfg.epochs)
    return cfg.lr * cfg.lr_decay**stage


class _BatchCache:
    """Replicated topology + tiled masks, one entry per batch size."""

    def __init__(self, grid: GridSpec):
        self.topo = build_grid_graph(grid)
        self.mask = build_node_mask(grid)
        self._sizes: dict[int, tuple] = {}

    def get(self, b: int):
        if b not in self._sizes:
            self._sizes[b] = (
                replicate_topology(self.topo, b),
                np.tile(self.mask.one_hot, (b, 1)),
                np.tile(self.mask.is_boundary, b),
            )
        return self._sizes[b]


def _batch_loss(params: GnnParams, cfg: GnnConfig, cache_entry, x, t, with_grads: bool):
    """Mean-squared error over one packed batch; optionally its gradients.

    x, t are (b, n_nodes, ch). Boundary rows of the decoded update are
    clamped (residual mode), matching how rollouts apply the model; their
    targets are zero, so they contribute zero loss and zero gradient.
    """
    topo_b, onehot_b, isb = cache_entry
    x_flat = x.reshape(-1, x.shape[-1])
    t_flat = t.reshape(-1, t.shape[-1])
    feats = node_features(x_flat, onehot_b)
    y, fwd_cache, _ = gnn_forward(params, topo_b, feats, cfg)
    if cfg.residual:
        y = y.copy()
        y[isb] = 0.0
    diff = y - t_flat
    sse = float(np.sum(np.square(diff, dtype=np.float64)))
    count = diff.size
    if not with_grads:
        return sse, count, None
    g = ((2.0 / count) * diff).astype(y.dtype)
    if cfg.residual:
        g[isb] = 0.0
    _, grads = gnn_backward(params, topo_b, fwd_cache, g, cfg)
    return sse, count, grads


def _split_loss(params, cfg, cache: _BatchCache, x, t, batch_size: int) -> float:
    sse_total, count_total = 0.0, 0
    for lo in range(0, x.shape[0], batch_size):
        xb, tb = x[lo:lo + batch_size], t[lo:lo + batch_size]
        sse, count, _ = _batch_loss(params, cfg, cache.get(xb.shape[0]), xb, tb, False)
        sse_total += sse
        count_total += count
    return sse_total / count_total


def _copy_params(params: GnnParams) -> GnnParams:
    return params_from_arrays({k: v.copy() for k, v in params_to_arrays(params).items()})


def train(dataset: Dataset, gnn_cfg: GnnConfig, train_cfg: TrainConfig,
          checkpoint_path: str | Path) -> TrainReport:
    """Fit one model and save the best-validation-loss weights.

    The saved file carries the architecture, normalization stats, grid, and
    training recipe, so evaluation needs nothing but the checkpoint and a
    test split. Report losses are recomputed noise-free with the saved
    weights; everything is deterministic given the config.
    """
    t0 = time.perf_counter()
    dtype = PRECISIONS[train_cfg.precision]
    spec = dataset.spec
    if gnn_cfg.n_dof != dataset.trajectories[0].snapshots[0].values.shape[1]:
        raise ValueError("gnn_cfg.n_dof does not match the dataset channel count")

    x_train, y_train = make_pairs(dataset, "train")
    x_val, y_val = make_pairs(dataset, "val")
    x_train = x_train.astype(dtype)
    y_train = y_train.astype(dtype)
    x_val = x_val.astype(dtype)
    y_val = y_val.astype(dtype)

    init_ss, shuffle_ss, noise_ss = np.random.SeedSequence(train_cfg.seed).spawn(3)
    params = init_gnn(gnn_cfg, np.random.default_rng(init_ss), dtype=dtype)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    noise_rng = np.random.default_rng(noise_ss)
    opt = adam_init(params.flat(), lr=train_cfg.lr)

    cache = _BatchCache(spec.grid)
    n_windows = x_train.shape[0]
    train_curve, val_curve = [], []
    best_val = np.inf
    best_epoch = -1
    best_params = _copy_params(params)

    for epoch in range(train_cfg.epochs):
        lr = lr_at(epoch, train_cfg)
        order = shuffle_rng.permutation(n_windows)
        sse_total, count_total = 0.0, 0
        for lo in range(0, n_windows, train_cfg.batch_size):
            idx = order[lo:lo + train_cfg.batch_size]
            xb = x_train[idx]
            if train_cfg.noise_std > 0:
                xb = xb + noise_rng.normal(0.0, train_cfg.noise_std, size=xb.shape).astype(dtype)
            sse, count, grads = _batch_loss(
                params, gnn_cfg, cache.get(xb.shape[0]), xb, y_train[idx], True
            )
            if not np.isfinite(sse):
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch}; lower the learning rate "
                    f"(current {lr:g})"
                )
            adam_step(opt, params.flat(), grads.flat(), lr=lr)
            sse_total += sse
            count_total += count
        train_curve.append(sse_total / count_total)
        val_curve.append(_split_loss(params, gnn_cfg, cache, x_val, y_val, train_cfg.batch_size))
        if val_curve[-1] < best_val:
            best_val = val_curve[-1]
            best_epoch = epoch
            best_params = _copy_params(params)

    final_train = _split_loss(best_params, gnn_cfg, cache, x_train, y_train, train_cfg.batch_size)
    final_val = _split_loss(best_params, gnn_cfg, cache, x_val, y_val, train_cfg.batch_size)
    wall = time.perf_counter() - t0

    checkpoint_path = Path(checkpoint_path)
    checkpoint_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(checkpoint_path, best_params, gnn_cfg, dataset, train_cfg,
                    best_epoch=best_epoch, final_train_loss=final_train,
                    final_val_loss=final_val)
    return TrainReport(
        train_loss=train_curve,
        val_loss=val_curve,
        wall_clock=wall,
        checkpoint_path=str(checkpoint_path),
        param_count=best_params.param_count(),
        best_epoch=best_epoch,
        final_train_loss=final_train,
        final_val_loss=final_val,
    )


def save_checkpoint(path, params: GnnParams, gnn_cfg: GnnConfig, dataset: Dataset,
                    train_cfg: TrainConfig, best_epoch: int,
                    final_train_loss: float, final_val_loss: float) -> None:
    # no wall-clock or timestamps in here: checkpoint bytes must be a pure
    # function of (dataset, configs), so identical runs hash identically
    spec = dataset.spec
    extra_arrays = {
        "norm/input_mean": dataset.input_stats.mean,
        "norm/input_std": dataset.input_stats.std,
        "norm/target_mean": dataset.target_stats.mean,
        "norm/target_std": dataset.target_stats.std,
    }
    extra_meta = {
        "tool_version": __version__,
        "problem": spec.problem,
        "nx": spec.grid.nx, "ny": spec.grid.ny,
        "dx": repr(spec.grid.dx), "dy": repr(spec.grid.dy),
        "c": repr(spec.constants.c), "alpha": repr(spec.constants.alpha),
        "eps0": repr(spec.constants.eps0),
        "gnn_dt": "none" if spec.gnn_dt is None else repr(spec.gnn_dt),
        "train_seed": train_cfg.seed,
        "epochs": train_cfg.epochs,
        "batch_size": train_cfg.batch_size,
        "lr": repr(train_cfg.lr),
        "lr_decay": repr(train_cfg.lr_decay),
        "noise_std": repr(train_cfg.noise_std),
        "precision": train_cfg.precision,
        "best_epoch": best_epoch,
        "final_train_loss": repr(final_train_loss),
        "final_val_loss": repr(final_val_loss),
    }
    save_model(path, params, gnn_cfg, extra_arrays=extra_arrays, extra_meta=extra_meta)


@dataclass
class Checkpoint:
    """A trained model plus everything needed to run and judge it."""

    params: GnnParams
    cfg: GnnConfig
    input_stats: NormStats
    target_stats: NormStats
    problem: str
    grid: GridSpec
    constants: PhysicalConstants
    gnn_dt: float | None
    meta: dict = field(default_factory=dict)


def load_checkpoint(path) -> Checkpoint:
    params, cfg, extras, meta = load_model(path)
    grid = GridSpec(nx=int(meta["nx"]), ny=int(meta["ny"]),
                    dx=float(meta["dx"]), dy=float(meta["dy"]))
    constants = PhysicalConstants(c=float(meta["c"]), alpha=float(meta["alpha"]),
                                  eps0=float(meta["eps0"]))
    return Checkpoint(
        params=params,
        cfg=cfg,
        input_stats=NormStats(extras["norm/input_mean"], extras["norm/input_std"]),
        target_stats=NormStats(extras["norm/target_mean"], extras["norm/target_std"]),
        problem=meta["problem"],
        grid=grid,
        constants=constants,
        gnn_dt=None if meta["gnn_dt"] == "none" else float(meta["gnn_dt"]),
        meta=meta,
    )


def cell_checkpoint_name(m: int, seed: int) -> str:
    return f"ckpt_M{m}_seed{seed}.bin"


def _sweep_cell(job):
    dataset, gnn_cfg, train_cfg, path = job
    report = train(dataset, gnn_cfg, train_cfg, path)
    return report


def train_sweep(dataset: Dataset, base_cfg: GnnConfig, m_list: list[int],
                seeds: list[int], train_cfg: TrainConfig, out_dir: str | Path,
                jobs: int = 1) -> list[dict]:
    """Train one model per (mp_steps, seed) cell; skip cells already on disk.

    Writes/updates sweep.ini in out_dir after every finished cell, so an
    interrupted sweep resumes where it stopped. Returns the manifest rows.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = read_sweep_manifest(out) if (out / "sweep.ini").is_file() else []
    done = {(r["m"], r["seed"]) for r in rows if r["status"] == "done"}

    pending = []
    for m in m_list:
        for seed in seeds:
            path = out / cell_checkpoint_name(m, seed)
            if (m, seed) in done and path.is_file():
                continue
            pending.append((
                dataset,
                replace(base_cfg, mp_steps=m),
                replace(train_cfg, seed=seed),
                path,
            ))

    def record(job, report: TrainReport):
        _, gnn_cfg, cell_cfg, path = job
        rows[:] = [r for r in rows if (r["m"], r["seed"]) != (gnn_cfg.mp_steps, cell_cfg.seed)]
        rows.append({
            "m": gnn_cfg.mp_steps,
            "seed": cell_cfg.seed,
            "status": "done",
            "checkpoint": path.name,
            "wall_clock": report.wall_clock,
            "best_epoch": report.best_epoch,
            "final_val_loss": report.final_val_loss,
            "param_count": report.param_count,
        })
        write_sweep_manifest(out, rows)

    if jobs <= 1 or len(pending) <= 1:
        for job in pending:
            record(job, _sweep_cell(job))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for job, report in zip(pending, pool.map(_sweep_cell, pending)):
                record(job, report)
    return sorted(rows, key=lambda r: (r["m"], r["seed"]))


def write_sweep_manifest(out_dir: Path, rows: list[dict]) -> None:
    cfg = configparser.ConfigParser()
    for r in sorted(rows, key=lambda r: (r["m"], r["seed"])):
        section = f"cell_M{r['m']}_seed{r['seed']}"
        cfg[section] = {
            "m": str(r["m"]),
            "seed": str(r["seed"]),
            "status": r["status"],
            "checkpoint": r["checkpoint"],
            "wall_clock": repr(float(r["wall_clock"])),
            "best_epoch": str(r["best_epoch"]),
            "final_val_loss": repr(float(r["final_val_loss"])),
            "param_count": str(r["param_count"]),
        }
    with open(Path(out_dir) / "sweep.ini", "w") as fh:
        cfg.write(fh)


def read_sweep_manifest(out_dir: str | Path) -> list[dict]:
    path = Path(out_dir) / "sweep.ini"
    if not path.is_file():
        raise FileNotFoundError(f"no sweep.ini under {out_dir}")
    cfg = configparser.ConfigParser()
    cfg.read(path)
    rows = []
    for section in cfg.sections():
        s = cfg[section]
        rows.append({
            "m": s.getint("m"),
            "seed": s.getint("seed"),
            "status": s["status"],
            "checkpoint": s["checkpoint"],
            "wall_clock": s.getfloat("wall_clock"),
            "best_epoch": s.getint("best_epoch"),
            "final_val_loss": s.getfloat("final_val_loss"),
            "param_count": s.getint("param_count"),
        })
    return sorted(rows, key=lambda r: (r["m"], r["seed"]))
