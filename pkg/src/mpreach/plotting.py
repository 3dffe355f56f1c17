"""Figure output for sweep reports and latent maps.

Uses the Agg backend so figures render headless; files are SVG unless the
target path says otherwise. CSVs stay the canonical record, these are the
pictures that go next to them.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import SweepResult
from .grid import GridSpec


def plot_sweep(result: SweepResult, path: str | Path, title: str | None = None) -> Path:
    """Error vs step count with the lower bound as a dashed vertical line."""
    ms = result.m_values
    means = [result.mean_by_m[m] for m in ms]
    stds = [result.std_by_m[m] for m in ms]
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.errorbar(ms, means, yerr=stds, marker="o", capsize=3, color="tab:blue",
                label="mean RRMSE over seeds")
    ax.axvline(result.bound, linestyle="--", color="tab:red",
               label=f"lower bound M* = {result.bound}")
    if result.knee is not None and result.knee != result.bound:
        ax.axvline(result.knee, linestyle=":", color="tab:green",
                   label=f"saturation knee M = {result.knee}")
    ax.set_yscale("log")
    ax.set_xlabel("message-passing steps M")
    ax.set_ylabel("rollout RRMSE")
    ax.set_title(title or f"{result.problem}: error vs message-passing depth")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    path = Path(path)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_per_step(result: SweepResult, path: str | Path) -> Path:
    """Per-rollout-step error, one line per step count (seed-averaged)."""
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for m in result.m_values:
        series = np.mean([r.rrmse_per_step for r in result.rows if r.m == m], axis=0)
        ax.plot(np.arange(1, series.size + 1), series, marker=".", label=f"M = {m}")
    ax.set_yscale("log")
    ax.set_xlabel("rollout step")
    ax.set_ylabel("RRMSE")
    ax.set_title(f"{result.problem}: error growth along the rollout")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    path = Path(path)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_latent_map(grid: GridSpec, umap: np.ndarray, path: str | Path,
                    title: str | None = None) -> Path:
    """One heat panel per message-passing stage of the relative latent norms."""
    n_stages = umap.shape[0]
    ncols = min(6, n_stages)
    nrows = -(-n_stages // ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(2.1 * ncols, 2.0 * nrows),
                             squeeze=False, constrained_layout=True)
    vmin, vmax = float(umap.min()), float(umap.max())
    last = None
    for m in range(n_stages):
        ax = axes[m // ncols][m % ncols]
        last = ax.imshow(umap[m].reshape(grid.ny, grid.nx), origin="lower",
                         vmin=vmin, vmax=vmax, cmap="viridis")
        ax.set_title(f"m = {m}", fontsize=8)
        ax.set_xticks([])
        ax.set_yticks([])
    for k in range(n_stages, nrows * ncols):
        axes[k // ncols][k % ncols].axis("off")
    fig.colorbar(last, ax=axes, shrink=0.8, label="relative latent norm")
    if title:
        fig.suptitle(title, fontsize=10)
    path = Path(path)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_field(grid: GridSpec, values: np.ndarray, path: str | Path,
               title: str | None = None) -> Path:
    """Single heatmap of one nodal field (debug/report convenience)."""
    fig, ax = plt.subplots(figsize=(3.4, 3.0))
    im = ax.imshow(np.asarray(values).reshape(grid.ny, grid.nx), origin="lower",
                   cmap="coolwarm")
    fig.colorbar(im, ax=ax, shrink=0.85)
    if title:
        ax.set_title(title, fontsize=9)
    ax.set_xticks([])
    ax.set_yticks([])
    path = Path(path)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path
