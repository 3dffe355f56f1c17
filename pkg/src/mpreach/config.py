"""Run configuration files: plain INI, schema-checked, fully resolvable.

A config names a problem and carries grid/constants/dataset/model/training
sections; the sweep section is optional. Unknown sections or keys are
rejected outright so typos fail loudly. Every command writes the resolved
config (defaults filled in) next to its outputs.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from io import StringIO
from pathlib import Path

from .bounds import BoundSpec, bound_spec_for
from .datasets import DatasetSpec, PROBLEMS, TIME_DEPENDENT, state_channels
from .gnn import GnnConfig
from .grid import GridSpec
from .pde_solvers import PhysicalConstants
from .training import PRECISIONS, TrainConfig


class ConfigError(ValueError):
    """Schema violation in a run configuration file."""


_MODES = ("residual", "direct")

# section -> key -> (kind, required); kinds drive parsing and the resolved dump
_SCHEMA = {
    "problem": {"name": ("str", True)},
    "grid": {"nx": ("int", True), "ny": ("int", True), "dx": ("float", True)},
    "domain": {"length": ("float", False)},
    "constants": {"c": ("float", False), "alpha": ("float", False), "eps0": ("float", False)},
    "dataset": {
        "n_sims": ("int", True),
        "keep_snapshots": ("int", False),
        "horizon": ("float", False),
        "solver_dt": ("float", False),
        "split": ("floats", False),
        "seed": ("int", False),
        "min_charges": ("int", False),
        "max_charges": ("int", False),
        "jacobi_tol": ("float", False),
    },
    "model": {
        "latent_dim": ("int", True),
        "hidden": ("str", False),
        "mode": ("str", False),
        "mp_steps": ("int", False),
    },
    "training": {
        "epochs": ("int", False),
        "batch_size": ("int", False),
        "lr": ("float", False),
        "lr_decay": ("float", False),
        "seed": ("int", False),
        "noise_std": ("float", False),
        "precision": ("str", False),
    },
    "sweep": {"m_list": ("ints", False), "seeds": ("ints", False)},
}
_REQUIRED_SECTIONS = ("problem", "grid", "dataset", "model")


def _parse_value(kind: str, raw: str, where: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "ints":
            return [int(v) for v in raw.split(",") if v.strip() != ""]
        if kind == "floats":
            return tuple(float(v) for v in raw.split(",") if v.strip() != "")
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from None


def _read_schema(cfg: configparser.ConfigParser, path) -> dict:
    values: dict[str, dict] = {}
    for section in cfg.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        values[section] = {}
        for key, raw in cfg[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            kind, _ = _SCHEMA[section][key]
            values[section][key] = _parse_value(kind, raw, f"{path} [{section}] {key}")
    for section in _REQUIRED_SECTIONS:
        if section not in values:
            raise ConfigError(f"{path}: missing required section [{section}]")
        for key, (_, required) in _SCHEMA[section].items():
            if required and key not in values[section]:
                raise ConfigError(f"{path}: missing required key {key!r} in [{section}]")
    return values


@dataclass
class RunConfig:
    """A parsed, validated, fully defaulted run description."""

    problem: str
    grid: GridSpec
    constants: PhysicalConstants
    domain_length: float | None
    dataset: DatasetSpec
    latent_dim: int
    hidden: int | None
    mode: str
    mp_steps: int | None
    train: TrainConfig
    sweep_m: list[int] | None
    sweep_seeds: list[int] | None
    source: str

    def gnn_config(self, mp_steps: int) -> GnnConfig:
        return GnnConfig(
            latent_dim=self.latent_dim,
            mp_steps=mp_steps,
            n_dof=state_channels(self.problem),
            hidden=self.hidden,
            residual=self.mode == "residual",
        )

    def bound_spec(self) -> BoundSpec:
        length = self.domain_length
        if length is None:
            length = max(self.grid.lx, self.grid.ly)
        return bound_spec_for(
            self.problem, dx=self.grid.dx, c=self.constants.c,
            gnn_dt=self.dataset.gnn_dt, length=length,
        )

    def resolved_text(self) -> str:
        """INI dump of every value actually in effect, defaults included."""
        out = configparser.ConfigParser()
        out["problem"] = {"name": self.problem}
        out["grid"] = {"nx": str(self.grid.nx), "ny": str(self.grid.ny),
                       "dx": repr(self.grid.dx)}
        if self.domain_length is not None:
            out["domain"] = {"length": repr(self.domain_length)}
        out["constants"] = {"c": repr(self.constants.c),
                            "alpha": repr(self.constants.alpha),
                            "eps0": repr(self.constants.eps0)}
        ds = {
            "n_sims": str(self.dataset.n_sims),
            "split": ",".join(repr(f) for f in self.dataset.split),
            "seed": str(self.dataset.seed),
        }
        if self.problem in TIME_DEPENDENT:
            ds["keep_snapshots"] = str(self.dataset.keep_snapshots)
            ds["horizon"] = repr(self.dataset.horizon)
            ds["solver_dt"] = repr(self.dataset.solver_dt)
        else:
            ds["min_charges"] = str(self.dataset.min_charges)
            ds["max_charges"] = str(self.dataset.max_charges)
            ds["jacobi_tol"] = repr(self.dataset.jacobi_tol)
        out["dataset"] = ds
        out["model"] = {
            "latent_dim": str(self.latent_dim),
            "hidden": "default" if self.hidden is None else str(self.hidden),
            "mode": self.mode,
            "mp_steps": "auto" if self.mp_steps is None else str(self.mp_steps),
        }
        out["training"] = {
            "epochs": str(self.train.epochs),
            "batch_size": str(self.train.batch_size),
            "lr": repr(self.train.lr),
            "lr_decay": repr(self.train.lr_decay),
            "seed": str(self.train.seed),
            "noise_std": repr(self.train.noise_std),
            "precision": self.train.precision,
        }
        if self.sweep_m is not None or self.sweep_seeds is not None:
            out["sweep"] = {
                "m_list": ",".join(str(m) for m in (self.sweep_m or [])),
                "seeds": ",".join(str(s) for s in (self.sweep_seeds or [])),
            }
        buf = StringIO()
        out.write(buf)
        return buf.getvalue()


def builtin_config(name: str) -> Path:
    """Path to one of the configs shipped inside the package.

    Accepts a bare name with or without the .cfg suffix, e.g. "wave_desk".
    """
    if not name.endswith(".cfg"):
        name += ".cfg"
    path = Path(__file__).parent / "configs" / name
    if not path.is_file():
        have = sorted(p.stem for p in path.parent.glob("*.cfg"))
        raise FileNotFoundError(f"no builtin config {name!r}; available: {', '.join(have)}")
    return path


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cfg = configparser.ConfigParser()
    try:
        cfg.read(path)
    except configparser.Error as err:
        raise ConfigError(f"{path}: {err}") from None
    values = _read_schema(cfg, path)

    problem = values["problem"]["name"]
    if problem not in PROBLEMS:
        raise ConfigError(f"{path}: unknown problem {problem!r}, expected one of {PROBLEMS}")

    g = values["grid"]
    try:
        grid = GridSpec(nx=g["nx"], ny=g["ny"], dx=g["dx"])
        consts = values.get("constants", {})
        constants = PhysicalConstants(
            c=consts.get("c", 0.5),
            alpha=consts.get("alpha", 1.0),
            eps0=consts.get("eps0", 1.0),
        )
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from None

    ds = values["dataset"]
    is_time = problem in TIME_DEPENDENT
    if is_time:
        for key in ("horizon", "solver_dt"):
            if key not in ds:
                raise ConfigError(f"{path}: [dataset] {key} is required for {problem}")
    try:
        dataset = DatasetSpec(
            problem=problem,
            grid=grid,
            constants=constants,
            n_sims=ds["n_sims"],
            keep_snapshots=ds.get("keep_snapshots", 10 if is_time else 2),
            horizon=ds.get("horizon", 0.0),
            solver_dt=ds.get("solver_dt", 0.0),
            split=ds.get("split", (0.8, 0.1, 0.1)),
            seed=ds.get("seed", 0),
            min_charges=ds.get("min_charges", 1),
            max_charges=ds.get("max_charges", 3),
            jacobi_tol=ds.get("jacobi_tol", 1e-8),
        )
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from None

    model = values["model"]
    hidden_raw = model.get("hidden", "default")
    if hidden_raw == "default":
        hidden = None
    else:
        hidden = _parse_value("int", hidden_raw, f"{path} [model] hidden")
    required_mode = "residual" if is_time else "direct"
    mode = model.get("mode", required_mode)
    if mode not in _MODES:
        raise ConfigError(f"{path}: [model] mode must be one of {_MODES}")
    if mode != required_mode:
        raise ConfigError(
            f"{path}: {problem} models must use {required_mode} prediction, got {mode!r}"
        )
    mp_steps = model.get("mp_steps")
    if mp_steps is not None and mp_steps < 0:
        raise ConfigError(f"{path}: [model] mp_steps must be >= 0")

    tr = values.get("training", {})
    if tr.get("precision", "float32") not in PRECISIONS:
        raise ConfigError(f"{path}: [training] precision must be one of {sorted(PRECISIONS)}")
    try:
        train = TrainConfig(
            epochs=tr.get("epochs", 200),
            batch_size=tr.get("batch_size", 16),
            lr=tr.get("lr", 1e-3),
            lr_decay=tr.get("lr_decay", 0.5),
            seed=tr.get("seed", 0),
            noise_std=tr.get("noise_std", 1e-3 if is_time else 0.0),
            precision=tr.get("precision", "float32"),
        )
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from None

    sweep = values.get("sweep", {})
    run = RunConfig(
        problem=problem,
        grid=grid,
        constants=constants,
        domain_length=values.get("domain", {}).get("length"),
        dataset=dataset,
        latent_dim=model["latent_dim"],
        hidden=hidden,
        mode=mode,
        mp_steps=mp_steps,
        train=train,
        sweep_m=sweep.get("m_list"),
        sweep_seeds=sweep.get("seeds"),
        source=str(path),
    )
    try:
        run.gnn_config(mp_steps=mp_steps if mp_steps is not None else 1)
        run.bound_spec()
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from None
    return run
