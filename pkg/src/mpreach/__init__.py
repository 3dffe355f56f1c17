"""Workbench for lower bounds on message-passing depth in graph PDE surrogates.

Classical finite-difference/Jacobi generators produce ground-truth fields on
regular grids; a from-scratch graph network (encoder, M shared-weight
message-passing steps, decoder) learns one-step surrogates; bound
calculators, sweeps, and rollout metrics probe how model accuracy responds
to M relative to the physics-implied minimum.

Plotting is intentionally not imported here; pull in mpreach.plotting (and
with it matplotlib) only when figures are needed.
"""

from ._version import __version__
from .bounds import (
    BoundSpec,
    bound_ratio,
    bound_spec_for,
    check_under_reach,
    mpi_lower_bound,
)
from .datasets import (
    Dataset,
    DatasetSpec,
    NormStats,
    denormalize,
    generate,
    load_dataset,
    normalize,
    sample_initial_condition,
    save_dataset,
)
from .evaluation import (
    SweepResult,
    detect_saturation,
    evaluate_extrapolation,
    evaluate_sweep,
    make_surrogate,
    rrmse,
)
from .gnn import GnnConfig, GnnParams, init_gnn, latent_norm_map, replicate_topology
from .grid import (
    GraphTopology,
    GridSpec,
    build_grid_graph,
    build_node_mask,
    graph_diameter,
    hop_distance,
    hop_distances_from,
)
from .pde_solvers import (
    ConvergenceError,
    FieldSnapshot,
    PhysicalConstants,
    StabilityError,
    Trajectory,
    solve_heat,
    solve_poisson_jacobi,
    solve_wave,
    wave_scheme_velocity,
)
from .training import (
    Checkpoint,
    TrainConfig,
    TrainReport,
    TrainingDiverged,
    load_checkpoint,
    train,
    train_sweep,
)

__all__ = [
    "__version__",
    "BoundSpec", "bound_ratio", "bound_spec_for", "check_under_reach", "mpi_lower_bound",
    "Dataset", "DatasetSpec", "NormStats", "denormalize", "generate", "load_dataset",
    "normalize", "sample_initial_condition", "save_dataset",
    "SweepResult", "detect_saturation", "evaluate_extrapolation", "evaluate_sweep",
    "make_surrogate", "rrmse",
    "GnnConfig", "GnnParams", "init_gnn", "latent_norm_map", "replicate_topology",
    "GraphTopology", "GridSpec", "build_grid_graph", "build_node_mask",
    "graph_diameter", "hop_distance", "hop_distances_from",
    "ConvergenceError", "FieldSnapshot", "PhysicalConstants", "StabilityError",
    "Trajectory", "solve_heat", "solve_poisson_jacobi", "solve_wave",
    "wave_scheme_velocity",
    "Checkpoint", "TrainConfig", "TrainReport", "TrainingDiverged",
    "load_checkpoint", "train", "train_sweep",
]
