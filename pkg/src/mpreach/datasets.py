"""Dataset generation, pruning, splits, normalization, and on-disk layout.

A dataset is a directory: one plain-text manifest (manifest.ini) plus one
binary file per trajectory. Trajectories are solved at a fine solver step,
then pruned to `keep_snapshots` uniformly spaced frames whose stride is the
surrogate's effective time step gnn_dt = horizon / (keep_snapshots - 1).
Kept frames hold the full per-node state: (u, v) for wave, whose dynamics
are second order in time, u alone for heat. Steady-state (poisson) samples
are stored as two-frame trajectories: frame 0 is the charge density, frame 1
the converged potential.

Everything is reproducible: a dataset spec plus its seed regenerates
byte-identical files.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .grid import GridSpec
from .pde_solvers import (
    FieldSnapshot,
    PhysicalConstants,
    Trajectory,
    solve_heat,
    solve_poisson_jacobi,
    solve_wave,
    wave_scheme_velocity,
)

WAVE = "wave"
HEAT = "heat"
POISSON = "poisson"
PROBLEMS = (WAVE, HEAT, POISSON)
TIME_DEPENDENT = (WAVE, HEAT)

SPLIT_NAMES = ("train", "val", "test")


def state_channels(problem: str) -> int:
    """Per-node state width: (u, v) for wave, a single field otherwise."""
    if problem not in PROBLEMS:
        raise ValueError(f"unknown problem {problem!r}")
    return 2 if problem == WAVE else 1

_TRAJ_MAGIC = int.from_bytes(b"GTRJ", "little")
_FORMAT_VERSION = 1
_STD_FLOOR = 1e-12


@dataclass(frozen=True)
class DatasetSpec:
    """Everything needed to regenerate a dataset from scratch."""

    problem: str
    grid: GridSpec
    constants: PhysicalConstants
    n_sims: int
    keep_snapshots: int
    horizon: float
    solver_dt: float
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    min_charges: int = 1
    max_charges: int = 3
    jacobi_tol: float = 1e-8

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}, expected one of {PROBLEMS}")
        if self.n_sims < 10:
            raise ValueError("n_sims must be at least 10")
        if abs(sum(self.split) - 1.0) > 1e-9 or any(f < 0 for f in self.split):
            raise ValueError(f"split fractions must be nonnegative and sum to 1, got {self.split}")
        if self.problem in TIME_DEPENDENT:
            if self.keep_snapshots < 2:
                raise ValueError("time-dependent problems need keep_snapshots >= 2")
            if self.horizon <= 0 or self.solver_dt <= 0:
                raise ValueError("horizon and solver_dt must be positive")
        else:
            if self.keep_snapshots != 2:
                raise ValueError("poisson samples are (rho, u) pairs: keep_snapshots must be 2")
            if not (1 <= self.min_charges <= self.max_charges):
                raise ValueError("need 1 <= min_charges <= max_charges")

    @property
    def gnn_dt(self) -> float | None:
        """Stride between kept snapshots; None for problems without a time axis."""
        if self.problem not in TIME_DEPENDENT:
            return None
        return self.horizon / (self.keep_snapshots - 1)

    @property
    def substeps(self) -> int:
        """Solver steps per kept frame; the nominal solver_dt is snapped so
        substeps * actual_dt lands exactly on the keep stride."""
        if self.problem not in TIME_DEPENDENT:
            return 0
        return max(1, round(self.gnn_dt / self.solver_dt))

    @property
    def actual_solver_dt(self) -> float | None:
        if self.problem not in TIME_DEPENDENT:
            return None
        return self.horizon / ((self.keep_snapshots - 1) * self.substeps)


@dataclass
class NormStats:
    """Per-channel z-score statistics; std is floored so constants map to 0."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.std = np.atleast_1d(np.asarray(self.std, dtype=np.float64))
        if self.mean.shape != self.std.shape:
            raise ValueError("mean/std shape mismatch")
        self.std = np.where(self.std < _STD_FLOOR, 1.0, self.std)


def normalize(field: np.ndarray, stats: NormStats) -> np.ndarray:
    return (field - stats.mean) / stats.std


def denormalize(field: np.ndarray, stats: NormStats) -> np.ndarray:
    return field * stats.std + stats.mean


@dataclass
class Dataset:
    spec: DatasetSpec
    trajectories: list[Trajectory]
    split_indices: dict[str, np.ndarray]
    input_stats: NormStats
    target_stats: NormStats

    @property
    def gnn_dt(self) -> float | None:
        return self.spec.gnn_dt

    def split(self, name: str) -> list[Trajectory]:
        if name not in SPLIT_NAMES:
            raise ValueError(f"unknown split {name!r}")
        return [self.trajectories[i] for i in self.split_indices[name]]


def sample_initial_condition(
    problem: str,
    grid: GridSpec,
    rng: np.random.Generator,
    n_bumps: int | None = None,
    n_charges: int | None = None,
    charge_range: tuple[int, int] = (1, 3),
) -> tuple[FieldSnapshot, ...]:
    """Random initial data for one simulation.

    wave -> (u0, v0) with v0 = 0; heat -> (u0,); poisson -> (rho,).
    Wave/heat fields are 1-3 Gaussian bumps (or n_bumps if given) with
    interior centers, widths U[0.05L, 0.2L] of the larger domain side, and
    amplitudes U[0.5, 1.5], zeroed on the boundary. Poisson charge densities
    place point charges on distinct interior nodes with magnitudes
    U[0.5, 1.5] and random sign.
    """
    if problem not in PROBLEMS:
        raise ValueError(f"unknown problem {problem!r}")
    coords = grid.coords()
    boundary = grid.boundary_flags()

    if problem == POISSON:
        k = int(rng.integers(charge_range[0], charge_range[1] + 1)) if n_charges is None else n_charges
        interior_ids = np.flatnonzero(~boundary)
        if not (1 <= k <= interior_ids.size):
            raise ValueError(f"cannot place {k} charges on {interior_ids.size} interior nodes")
        nodes = rng.choice(interior_ids, size=k, replace=False)
        magnitudes = rng.uniform(0.5, 1.5, size=k)
        signs = rng.integers(0, 2, size=k) * 2 - 1
        rho = np.zeros(grid.node_count)
        rho[nodes] = magnitudes * signs
        return (FieldSnapshot(time=0.0, values=rho, meta={"n_charges": k}),)

    length = max(grid.lx, grid.ly)
    k = int(rng.integers(1, 4)) if n_bumps is None else n_bumps
    if k < 1:
        raise ValueError("need at least one bump")
    u = np.zeros(grid.node_count)
    for _ in range(k):
        cx = rng.uniform(grid.dx, grid.lx - grid.dx)
        cy = rng.uniform(grid.dy, grid.ly - grid.dy)
        width = rng.uniform(0.05 * length, 0.2 * length)
        amp = rng.uniform(0.5, 1.5)
        r2 = (coords[:, 0] - cx) ** 2 + (coords[:, 1] - cy) ** 2
        u += amp * np.exp(-r2 / (2.0 * width**2))
    u[boundary] = 0.0
    u0 = FieldSnapshot(time=0.0, values=u, meta={"n_bumps": k})
    if problem == WAVE:
        v0 = FieldSnapshot(time=0.0, values=np.zeros(grid.node_count))
        return (u0, v0)
    return (u0,)


def _prune(traj: Trajectory, spec: DatasetSpec) -> Trajectory:
    """Keep every substeps-th frame and restamp times onto the exact
    arithmetic sequence j * gnn_dt."""
    idx = np.arange(spec.keep_snapshots) * spec.substeps
    kept = [
        FieldSnapshot(time=j * spec.gnn_dt, values=traj.snapshots[i].values)
        for j, i in enumerate(idx)
    ]
    meta = dict(traj.metadata)
    meta["substeps"] = spec.substeps
    return Trajectory(grid=traj.grid, snapshots=kept, metadata=meta)


def _prune_wave(fine: Trajectory, spec: DatasetSpec) -> Trajectory:
    """Prune and attach the leapfrog-consistent velocity as a second channel.

    A lone displacement frame is not a state for second-order dynamics, so
    kept wave frames store (u, v) per node. The velocity is the discrete one
    whose Taylor bootstrap continues the fine run: restarting the solver from
    any kept (u, v) reproduces the following kept frames, which makes every
    stored one-step target a function of the stored input.
    """
    dt = spec.actual_solver_dt
    idx = np.arange(spec.keep_snapshots) * spec.substeps
    kept = []
    for j, i in enumerate(idx):
        u = fine.snapshots[i].values.ravel()
        if i == 0:
            v = np.zeros_like(u)
        else:
            v = wave_scheme_velocity(
                fine.grid, spec.constants.c, dt,
                fine.snapshots[i - 1].values, fine.snapshots[i].values,
            )
        kept.append(FieldSnapshot(time=j * spec.gnn_dt, values=np.column_stack([u, v])))
    meta = dict(fine.metadata)
    meta["substeps"] = spec.substeps
    meta["channels"] = "u,v"
    return Trajectory(grid=fine.grid, snapshots=kept, metadata=meta)


def _solve_one(spec: DatasetSpec, rng: np.random.Generator) -> Trajectory:
    n_steps = (spec.keep_snapshots - 1) * spec.substeps
    if spec.problem == WAVE:
        u0, v0 = sample_initial_condition(WAVE, spec.grid, rng)
        traj = solve_wave(spec.grid, spec.constants.c, spec.actual_solver_dt, n_steps, u0, v0)
        return _prune_wave(traj, spec)
    if spec.problem == HEAT:
        (u0,) = sample_initial_condition(HEAT, spec.grid, rng)
        traj = solve_heat(spec.grid, spec.constants.alpha, spec.actual_solver_dt, n_steps, u0)
        return _prune(traj, spec)
    (rho,) = sample_initial_condition(
        POISSON, spec.grid, rng, charge_range=(spec.min_charges, spec.max_charges)
    )
    u = solve_poisson_jacobi(spec.grid, rho, spec.constants.eps0, tol=spec.jacobi_tol)
    # ordinal times: frame 0 holds the source, frame 1 the potential
    pair = [
        FieldSnapshot(time=0.0, values=rho.values, meta=rho.meta),
        FieldSnapshot(time=1.0, values=u.values, meta=u.meta),
    ]
    return Trajectory(grid=spec.grid, snapshots=pair, metadata={"scheme": "poisson_jacobi"})


def _split_sizes(n: int, fractions: tuple[float, float, float]) -> tuple[int, int, int]:
    n_train = int(fractions[0] * n + 0.5)
    n_val = int(fractions[1] * n + 0.5)
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 0:
        raise ValueError("split fractions leave a negative bucket")
    return n_train, n_val, n_test


def pair_arrays(problem: str, traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """(inputs, targets) for one trajectory, unnormalized.

    Time-dependent: inputs are frames 0..T-1, targets the forward differences
    u_{n+1} - u_n. Poisson: one (rho, u) pair.
    """
    arr = traj.as_array()
    if problem in TIME_DEPENDENT:
        return arr[:-1], arr[1:] - arr[:-1]
    return arr[:1], arr[1:]


def compute_normalization(problem: str, trajectories: list[Trajectory]) -> tuple[NormStats, NormStats]:
    """Channel-wise stats of inputs and targets over the given trajectories."""
    if not trajectories:
        raise ValueError("cannot compute statistics from an empty split")
    ins, outs = [], []
    for traj in trajectories:
        x, y = pair_arrays(problem, traj)
        ins.append(x.reshape(-1, x.shape[-1]))
        outs.append(y.reshape(-1, y.shape[-1]))
    x = np.concatenate(ins)
    y = np.concatenate(outs)
    return (
        NormStats(mean=x.mean(axis=0), std=x.std(axis=0)),
        NormStats(mean=y.mean(axis=0), std=y.std(axis=0)),
    )


def generate(spec: DatasetSpec) -> Dataset:
    """Solve every simulation, prune, split, and fit normalization stats.

    Deterministic: the seed feeds one child RNG stream per simulation plus a
    dedicated stream for the split shuffle, so results do not depend on
    generation order or n_sims-preserving code changes elsewhere.
    """
    root = np.random.SeedSequence(spec.seed)
    children = root.spawn(spec.n_sims + 1)
    trajectories = []
    for i in range(spec.n_sims):
        rng = np.random.default_rng(children[i])
        traj = _solve_one(spec, rng)
        traj.metadata["sim"] = i
        trajectories.append(traj)

    split_rng = np.random.default_rng(children[-1])
    perm = split_rng.permutation(spec.n_sims)
    n_train, n_val, _ = _split_sizes(spec.n_sims, spec.split)
    split_indices = {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train:n_train + n_val]),
        "test": np.sort(perm[n_train + n_val:]),
    }
    train = [trajectories[i] for i in split_indices["train"]]
    input_stats, target_stats = compute_normalization(spec.problem, train)
    return Dataset(
        spec=spec,
        trajectories=trajectories,
        split_indices=split_indices,
        input_stats=input_stats,
        target_stats=target_stats,
    )


def _format_floats(arr: np.ndarray) -> str:
    return ",".join(repr(float(v)) for v in np.atleast_1d(arr))


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")])


def save_trajectory(path: Path, traj: Trajectory) -> None:
    """Binary frame stack: 4 uint32 LE header then float64 LE values in
    [snapshot, node, channel] order."""
    arr = np.ascontiguousarray(traj.as_array(), dtype="<f8")
    header = np.array([_TRAJ_MAGIC, arr.shape[0], arr.shape[1], arr.shape[2]], dtype="<u4")
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(arr.tobytes())


def load_trajectory(path: Path, grid: GridSpec, times: np.ndarray) -> Trajectory:
    with open(path, "rb") as fh:
        header = np.frombuffer(fh.read(16), dtype="<u4")
        if header[0] != _TRAJ_MAGIC:
            raise ValueError(f"{path}: bad trajectory magic")
        n_snap, n_nodes, n_ch = (int(v) for v in header[1:])
        if n_nodes != grid.node_count:
            raise ValueError(f"{path}: {n_nodes} nodes, grid has {grid.node_count}")
        if n_snap != len(times):
            raise ValueError(f"{path}: {n_snap} frames, expected {len(times)}")
        data = np.frombuffer(fh.read(n_snap * n_nodes * n_ch * 8), dtype="<f8")
    arr = data.reshape(n_snap, n_nodes, n_ch)
    snaps = [FieldSnapshot(time=float(t), values=arr[k].copy()) for k, t in enumerate(times)]
    return Trajectory(grid=grid, snapshots=snaps)


def _frame_times(spec: DatasetSpec) -> np.ndarray:
    if spec.problem in TIME_DEPENDENT:
        return np.arange(spec.keep_snapshots) * spec.gnn_dt
    return np.array([0.0, 1.0])


def save_dataset(ds: Dataset, out_dir: str | Path) -> Path:
    """Write manifest.ini plus one traj_NNNNN.bin per simulation."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = ds.spec
    cfg = configparser.ConfigParser()
    cfg["dataset"] = {
        "format_version": str(_FORMAT_VERSION),
        "problem": spec.problem,
        "n_sims": str(spec.n_sims),
        "keep_snapshots": str(spec.keep_snapshots),
        "horizon": repr(spec.horizon),
        "solver_dt": repr(spec.solver_dt),
        "seed": str(spec.seed),
        "min_charges": str(spec.min_charges),
        "max_charges": str(spec.max_charges),
        "jacobi_tol": repr(spec.jacobi_tol),
    }
    cfg["grid"] = {
        "nx": str(spec.grid.nx),
        "ny": str(spec.grid.ny),
        "dx": repr(spec.grid.dx),
        "dy": repr(spec.grid.dy),
    }
    cfg["constants"] = {
        "c": repr(spec.constants.c),
        "alpha": repr(spec.constants.alpha),
        "eps0": repr(spec.constants.eps0),
    }
    cfg["split"] = {
        "fractions": _format_floats(np.array(spec.split)),
        **{name: ",".join(str(i) for i in ds.split_indices[name]) for name in SPLIT_NAMES},
    }
    cfg["stats"] = {
        "input_mean": _format_floats(ds.input_stats.mean),
        "input_std": _format_floats(ds.input_stats.std),
        "target_mean": _format_floats(ds.target_stats.mean),
        "target_std": _format_floats(ds.target_stats.std),
    }
    with open(out / "manifest.ini", "w") as fh:
        cfg.write(fh)
    for i, traj in enumerate(ds.trajectories):
        save_trajectory(out / f"traj_{i:05d}.bin", traj)
    return out


def load_dataset(in_dir: str | Path) -> Dataset:
    src = Path(in_dir)
    manifest = src / "manifest.ini"
    if not manifest.is_file():
        raise FileNotFoundError(f"no manifest.ini under {src}")
    cfg = configparser.ConfigParser()
    cfg.read(manifest)
    d = cfg["dataset"]
    version = d.getint("format_version")
    if version != _FORMAT_VERSION:
        raise ValueError(f"{manifest}: unsupported dataset format version {version}")
    grid = GridSpec(
        nx=cfg["grid"].getint("nx"), ny=cfg["grid"].getint("ny"),
        dx=cfg["grid"].getfloat("dx"), dy=cfg["grid"].getfloat("dy"),
    )
    constants = PhysicalConstants(
        c=cfg["constants"].getfloat("c"),
        alpha=cfg["constants"].getfloat("alpha"),
        eps0=cfg["constants"].getfloat("eps0"),
    )
    fractions = tuple(_parse_floats(cfg["split"]["fractions"]))
    spec = DatasetSpec(
        problem=d["problem"], grid=grid, constants=constants,
        n_sims=d.getint("n_sims"), keep_snapshots=d.getint("keep_snapshots"),
        horizon=d.getfloat("horizon"), solver_dt=d.getfloat("solver_dt"),
        split=fractions, seed=d.getint("seed"),
        min_charges=d.getint("min_charges"), max_charges=d.getint("max_charges"),
        jacobi_tol=d.getfloat("jacobi_tol"),
    )
    split_indices = {
        name: np.array([int(v) for v in cfg["split"][name].split(",") if v != ""], dtype=np.int64)
        for name in SPLIT_NAMES
    }
    stats = cfg["stats"]
    input_stats = NormStats(_parse_floats(stats["input_mean"]), _parse_floats(stats["input_std"]))
    target_stats = NormStats(_parse_floats(stats["target_mean"]), _parse_floats(stats["target_std"]))
    times = _frame_times(spec)
    trajectories = [
        load_trajectory(src / f"traj_{i:05d}.bin", grid, times) for i in range(spec.n_sims)
    ]
    return Dataset(
        spec=spec, trajectories=trajectories, split_indices=split_indices,
        input_stats=input_stats, target_stats=target_stats,
    )


def with_seed(spec: DatasetSpec, seed: int) -> DatasetSpec:
    return replace(spec, seed=seed)
