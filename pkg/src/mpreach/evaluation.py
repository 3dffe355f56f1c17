"""Rollout metrics, step-count sweep analysis, extrapolation, latent maps.

RRMSE here is sqrt(sum((pred - truth)^2)) / sqrt(sum(truth^2)) pooled over
the predicted frames and all nodes; the shared initial frame never enters.
A 10-frame trajectory therefore scores a 9-step rollout.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bounds import bound_spec_for, check_under_reach, mpi_lower_bound
from .datasets import Dataset, DatasetSpec, TIME_DEPENDENT, denormalize, generate, normalize
from .gnn import gnn_forward, latent_norm_map, node_features
from .grid import GridSpec, NodeMask, build_grid_graph, build_node_mask
from .training import Checkpoint, load_checkpoint, read_sweep_manifest


def rrmse(pred: np.ndarray, truth: np.ndarray) -> tuple[float, np.ndarray]:
    """(pooled score, per-frame scores) for stacked frames (steps, nodes, ch).

    Scale-covariant and zero iff pred equals truth. An identically zero truth
    scores 0 for a perfect prediction and inf otherwise.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs truth {truth.shape}")
    if pred.ndim == 2:
        pred, truth = pred[None], truth[None]
    axes = tuple(range(1, truth.ndim))
    num_steps = np.sum((pred - truth) ** 2, axis=axes)
    den_steps = np.sum(truth**2, axis=axes)
    with np.errstate(divide="ignore", invalid="ignore"):
        per_step = np.sqrt(num_steps) / np.sqrt(den_steps)
    per_step = np.where(den_steps == 0.0, np.where(num_steps == 0.0, 0.0, np.inf), per_step)
    total_den = den_steps.sum()
    if total_den == 0.0:
        total = 0.0 if num_steps.sum() == 0.0 else np.inf
    else:
        total = float(np.sqrt(num_steps.sum()) / np.sqrt(total_den))
    return total, per_step


class _Surrogate:
    """A loaded checkpoint bound to one graph, ready to step fields."""

    def __init__(self, ckpt: Checkpoint, grid: GridSpec | None = None):
        self.ckpt = ckpt
        self.grid = ckpt.grid if grid is None else grid
        self.topo = build_grid_graph(self.grid)
        self.mask: NodeMask = build_node_mask(self.grid)
        self.dtype = ckpt.params.dtype

    def step(self, u: np.ndarray) -> np.ndarray:
        """One physical-space application: normalize, apply net, denormalize."""
        ckpt = self.ckpt
        x = normalize(u, ckpt.input_stats).astype(self.dtype)
        feats = node_features(x, self.mask.one_hot)
        y, _, _ = gnn_forward(ckpt.params, self.topo, feats, ckpt.cfg)
        y = denormalize(y.astype(np.float64), ckpt.target_stats)
        if ckpt.cfg.residual:
            y[self.mask.is_boundary] = 0.0
            return u + y
        return y

    def rollout(self, u0: np.ndarray, n_steps: int) -> np.ndarray:
        """(n_steps + 1, nodes, ch) trajectory; frame 0 is the input."""
        u = np.asarray(u0, dtype=np.float64)
        u = u if u.ndim == 2 else u[:, None]
        frames = np.empty((n_steps + 1,) + u.shape)
        frames[0] = u
        for k in range(n_steps):
            u = self.step(u)
            frames[k + 1] = u
        return frames

    def latent_map(self, u: np.ndarray) -> np.ndarray:
        """Relative latent-norm field, shape (mp_steps + 1, nodes)."""
        ckpt = self.ckpt
        u = np.asarray(u, dtype=np.float64)
        u = u if u.ndim == 2 else u[:, None]
        x = normalize(u, ckpt.input_stats).astype(self.dtype)
        feats = node_features(x, self.mask.one_hot)
        _, _, latents = gnn_forward(ckpt.params, self.topo, feats, ckpt.cfg,
                                    collect_latents=True)
        return latent_norm_map(latents)


def make_surrogate(ckpt: Checkpoint | str | Path, grid: GridSpec | None = None) -> _Surrogate:
    if not isinstance(ckpt, Checkpoint):
        ckpt = load_checkpoint(ckpt)
    return _Surrogate(ckpt, grid)


def _trajectory_scores(surrogate: _Surrogate, trajectories) -> tuple[np.ndarray, np.ndarray]:
    """Per-trajectory pooled scores and the mean per-step series."""
    finals, steps = [], []
    for traj in trajectories:
        arr = traj.as_array()
        if surrogate.ckpt.cfg.residual:
            pred = surrogate.rollout(arr[0], arr.shape[0] - 1)[1:]
        else:
            pred = surrogate.step(arr[0])[None]
        total, per_step = rrmse(pred, arr[1:])
        finals.append(total)
        steps.append(per_step)
    return np.array(finals), np.mean(steps, axis=0)


@dataclass
class SweepRow:
    m: int
    seed: int
    rrmse_final: float
    rrmse_per_step: np.ndarray
    runtime: float
    classification: str


@dataclass
class SweepResult:
    problem: str
    bound: int
    rows: list[SweepRow]
    mean_by_m: dict[int, float]
    std_by_m: dict[int, float]
    knee: int | None
    tau: float

    @property
    def m_values(self) -> list[int]:
        return sorted(self.mean_by_m)


def detect_saturation(m_values, mean_errors, tau: float = 0.5) -> int | None:
    """Smallest step count whose mean error is within (1 + tau) of the best.

    Needs at least 3 distinct step counts to be meaningful; returns None
    otherwise.
    """
    m_values = list(m_values)
    errors = np.asarray(list(mean_errors), dtype=np.float64)
    if len(m_values) != errors.size:
        raise ValueError("m_values and mean_errors length mismatch")
    if len(set(m_values)) < 3:
        return None
    cutoff = (1.0 + tau) * errors.min()
    order = np.argsort(m_values)
    for i in order:
        if errors[i] <= cutoff:
            return int(m_values[i])
    return None


def dataset_bound_spec(spec: DatasetSpec, length: float | None = None):
    """BoundSpec implied by a dataset: wave reads c and the keep stride,
    heat/poisson read the largest grid extent (unless overridden)."""
    if length is None:
        length = max(spec.grid.lx, spec.grid.ly)
    return bound_spec_for(
        spec.problem, dx=spec.grid.dx, c=spec.constants.c, gnn_dt=spec.gnn_dt, length=length,
    )


def evaluate_sweep(sweep_dir: str | Path, dataset: Dataset, tau: float = 0.5,
                   length: float | None = None) -> SweepResult:
    """Score every finished sweep cell on the dataset's test split.

    Rolls out each test trajectory from its first frame, aggregates over
    seeds per step count, classifies each cell against the bound, and finds
    the saturation knee.
    """
    sweep_dir = Path(sweep_dir)
    manifest = read_sweep_manifest(sweep_dir)
    done = [r for r in manifest if r["status"] == "done"]
    if not done:
        raise FileNotFoundError(f"no finished checkpoints recorded under {sweep_dir}")
    test = dataset.split("test")
    if not test:
        raise ValueError("dataset has an empty test split")
    bspec = dataset_bound_spec(dataset.spec, length=length)
    m_star = mpi_lower_bound(bspec)

    rows = []
    for cell in done:
        t0 = time.perf_counter()
        ckpt = load_checkpoint(sweep_dir / cell["checkpoint"])
        surrogate = _Surrogate(ckpt, dataset.spec.grid)
        finals, per_step = _trajectory_scores(surrogate, test)
        rows.append(SweepRow(
            m=cell["m"],
            seed=cell["seed"],
            rrmse_final=float(finals.mean()),
            rrmse_per_step=per_step,
            runtime=time.perf_counter() - t0,
            classification=check_under_reach(cell["m"], bspec),
        ))

    mean_by_m: dict[int, float] = {}
    std_by_m: dict[int, float] = {}
    for m in sorted({r.m for r in rows}):
        vals = np.array([r.rrmse_final for r in rows if r.m == m])
        mean_by_m[m] = float(vals.mean())
        std_by_m[m] = float(vals.std())
    knee = detect_saturation(list(mean_by_m), list(mean_by_m.values()), tau=tau)
    return SweepResult(
        problem=dataset.spec.problem,
        bound=m_star,
        rows=rows,
        mean_by_m=mean_by_m,
        std_by_m=std_by_m,
        knee=knee,
        tau=tau,
    )


def evaluate_extrapolation(ckpt: Checkpoint | str | Path, eval_spec: DatasetSpec,
                           length: float | None = None) -> dict:
    """Judge a trained model on a freshly generated out-of-distribution set.

    Every simulation in eval_spec is unseen by the model, so all of them are
    scored (no split). The bound is recomputed for the new geometry and the
    model's unchanged step count is reclassified against it.
    """
    if not isinstance(ckpt, Checkpoint):
        ckpt = load_checkpoint(ckpt)
    if ckpt.problem != eval_spec.problem:
        raise ValueError(f"checkpoint is for {ckpt.problem!r}, eval spec for {eval_spec.problem!r}")
    if eval_spec.problem in TIME_DEPENDENT:
        if ckpt.gnn_dt is None or abs(eval_spec.gnn_dt - ckpt.gnn_dt) > 1e-9 * ckpt.gnn_dt:
            raise ValueError(
                f"time stride mismatch: model steps {ckpt.gnn_dt}, eval data {eval_spec.gnn_dt}"
            )
    dataset = generate(eval_spec)
    surrogate = _Surrogate(ckpt, eval_spec.grid)
    finals, per_step = _trajectory_scores(surrogate, dataset.trajectories)
    bspec = dataset_bound_spec(eval_spec, length=length)
    return {
        "problem": eval_spec.problem,
        "m": ckpt.cfg.mp_steps,
        "bound": mpi_lower_bound(bspec),
        "classification": check_under_reach(ckpt.cfg.mp_steps, bspec),
        "rrmse_mean": float(finals.mean()),
        "rrmse_std": float(finals.std()),
        "rrmse_per_step": per_step,
        "finite": bool(np.all(np.isfinite(finals))),
        "n_trajectories": len(dataset.trajectories),
    }


def write_sweep_csv(path: str | Path, result: SweepResult) -> None:
    """Long-format per-step scores: problem, M, seed, step, rrmse."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["problem", "m", "seed", "step", "rrmse"])
        for row in sorted(result.rows, key=lambda r: (r.m, r.seed)):
            for step, value in enumerate(row.rrmse_per_step, start=1):
                writer.writerow([result.problem, row.m, row.seed, step, repr(float(value))])


def write_summary_csv(path: str | Path, result: SweepResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["problem", "m", "mean_rrmse", "std_rrmse", "n_seeds",
                         "classification", "bound", "knee"])
        for m in result.m_values:
            rows = [r for r in result.rows if r.m == m]
            writer.writerow([
                result.problem, m,
                repr(result.mean_by_m[m]), repr(result.std_by_m[m]),
                len(rows), rows[0].classification, result.bound,
                "" if result.knee is None else result.knee,
            ])


def write_finals_csv(path: str | Path, result: SweepResult) -> None:
    """One row per sweep cell: the pooled score, timing, classification."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["problem", "m", "seed", "rrmse_final", "runtime", "classification"])
        for row in sorted(result.rows, key=lambda r: (r.m, r.seed)):
            writer.writerow([result.problem, row.m, row.seed, repr(row.rrmse_final),
                             repr(row.runtime), row.classification])


def read_sweep_result(out_dir: str | Path) -> SweepResult:
    """Rebuild a SweepResult from the three CSVs written beside it.

    Enough for re-plotting; the saturation tolerance is not stored, so the
    default is assumed.
    """
    out = Path(out_dir)
    for name in ("finals.csv", "summary.csv", "sweep.csv"):
        if not (out / name).is_file():
            raise FileNotFoundError(f"missing {name} under {out}")

    with open(out / "sweep.csv", newline="") as fh:
        per_step: dict[tuple[int, int], list[tuple[int, float]]] = {}
        problem = None
        for rec in csv.DictReader(fh):
            problem = rec["problem"]
            key = (int(rec["m"]), int(rec["seed"]))
            per_step.setdefault(key, []).append((int(rec["step"]), float(rec["rrmse"])))

    rows = []
    with open(out / "finals.csv", newline="") as fh:
        for rec in csv.DictReader(fh):
            key = (int(rec["m"]), int(rec["seed"]))
            series = np.array([v for _, v in sorted(per_step.get(key, []))])
            rows.append(SweepRow(
                m=key[0], seed=key[1],
                rrmse_final=float(rec["rrmse_final"]),
                rrmse_per_step=series,
                runtime=float(rec["runtime"]),
                classification=rec["classification"],
            ))

    mean_by_m, std_by_m = {}, {}
    bound, knee = 0, None
    with open(out / "summary.csv", newline="") as fh:
        for rec in csv.DictReader(fh):
            problem = rec["problem"]
            m = int(rec["m"])
            mean_by_m[m] = float(rec["mean_rrmse"])
            std_by_m[m] = float(rec["std_rrmse"])
            bound = int(rec["bound"])
            knee = None if rec["knee"] == "" else int(rec["knee"])
    if problem is None or not rows:
        raise ValueError(f"{out}: evaluation CSVs are empty")
    return SweepResult(problem=problem, bound=bound, rows=rows,
                       mean_by_m=mean_by_m, std_by_m=std_by_m, knee=knee, tau=0.5)


def write_latent_csv(path: str | Path, grid: GridSpec, umap: np.ndarray) -> None:
    """Wide format: one row per node, one column per message-passing stage."""
    coords = grid.coords()
    n_stages = umap.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "x", "y"] + [f"u{m}" for m in range(n_stages)])
        for i in range(grid.node_count):
            writer.writerow([i, repr(float(coords[i, 0])), repr(float(coords[i, 1]))]
                            + [repr(float(umap[m, i])) for m in range(n_stages)])
