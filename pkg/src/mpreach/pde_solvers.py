"""Classical ground-truth generators on the 2D grid.

Wave: second-order central differences in space and time (3-level leapfrog,
first step bootstrapped from the initial velocity by a Taylor expansion).
Heat: explicit Euler with the 5-point Laplacian. Poisson: Jacobi iteration.
All three use zero-Dirichlet boundaries and float64 arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec


class StabilityError(ValueError):
    """Raised when a requested time step violates the explicit-scheme limit."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative solve stops before reaching tolerance."""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class PhysicalConstants:
    """Problem constants: wave speed, thermal diffusivity, permittivity scale."""

    c: float = 0.5
    alpha: float = 1.0
    eps0: float = 1.0

    def __post_init__(self):
        if self.c <= 0 or self.alpha <= 0 or self.eps0 <= 0:
            raise ValueError("physical constants must be positive")


@dataclass
class FieldSnapshot:
    """Per-node field values at one instant; shape (node_count, n_dof)."""

    time: float
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")


@dataclass
class Trajectory:
    """Time-ordered snapshots plus the solver settings that produced them."""

    grid: GridSpec
    snapshots: list[FieldSnapshot]
    metadata: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    def as_array(self) -> np.ndarray:
        """(n_snapshots, node_count, n_dof) stack of the field values."""
        return np.stack([s.values for s in self.snapshots])


def _as_field(u, spec: GridSpec) -> np.ndarray:
    """Accept a FieldSnapshot or array; return a (ny, nx) float64 grid view."""
    values = u.values if isinstance(u, FieldSnapshot) else np.asarray(u, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size != spec.node_count:
        raise ValueError(f"field has {values.size} entries, grid has {spec.node_count} nodes")
    return values.reshape(spec.ny, spec.nx).copy()


def laplacian_interior(field2d: np.ndarray, dx: float) -> np.ndarray:
    """5-point Laplacian on interior nodes; boundary entries are zero."""
    lap = np.zeros_like(field2d)
    lap[1:-1, 1:-1] = (
        field2d[1:-1, 2:] + field2d[1:-1, :-2]
        + field2d[2:, 1:-1] + field2d[:-2, 1:-1]
        - 4.0 * field2d[1:-1, 1:-1]
    ) / (dx * dx)
    return lap


def _clamp_boundary(field2d: np.ndarray) -> None:
    field2d[0, :] = 0.0
    field2d[-1, :] = 0.0
    field2d[:, 0] = 0.0
    field2d[:, -1] = 0.0


def solve_wave(spec: GridSpec, c: float, dt: float, n_steps: int, u0, v0) -> Trajectory:
    """Integrate u_tt = c^2 lap(u) with zero-Dirichlet boundaries.

    Refuses to run outside the square-grid CFL limit c*dt/dx <= 1/sqrt(2).
    Returns n_steps + 1 snapshots at times k*dt.
    """
    if c <= 0 or dt <= 0 or n_steps < 0:
        raise ValueError("need c > 0, dt > 0, n_steps >= 0")
    cfl = c * dt / spec.dx
    limit = 1.0 / np.sqrt(2.0)
    if cfl > limit * (1.0 + 1e-12):
        raise StabilityError(
            f"CFL ratio c*dt/dx = {cfl:.6g} exceeds 1/sqrt(2) = {limit:.6g}"
        )

    u = _as_field(u0, spec)
    v = _as_field(v0, spec)
    _clamp_boundary(u)

    coef = (c * dt) ** 2
    snaps = [u.copy()]
    if n_steps >= 1:
        # Taylor bootstrap for the first step
        u_next = u + dt * v + 0.5 * coef * laplacian_interior(u, spec.dx)
        _clamp_boundary(u_next)
        snaps.append(u_next)
        u_prev, u_curr = u, u_next
        for _ in range(n_steps - 1):
            u_new = 2.0 * u_curr - u_prev + coef * laplacian_interior(u_curr, spec.dx)
            _clamp_boundary(u_new)
            snaps.append(u_new)
            u_prev, u_curr = u_curr, u_new

    snapshots = [FieldSnapshot(time=k * dt, values=s.reshape(-1)) for k, s in enumerate(snaps)]
    meta = {"scheme": "wave_leapfrog", "dt": dt, "c": c, "cfl": cfl}
    return Trajectory(grid=spec, snapshots=snapshots, metadata=meta)


def wave_scheme_velocity(spec: GridSpec, c: float, dt: float, u_prev, u_curr) -> np.ndarray:
    """Discrete velocity whose Taylor bootstrap continues (u_prev, u_curr).

    Feeding solve_wave the final two snapshots of a run through this function
    (negated) replays the run backwards exactly, which is the scheme-level
    time-reversal symmetry of the leapfrog update.
    """
    a = _as_field(u_prev, spec)
    b = _as_field(u_curr, spec)
    vel = (b - a) / dt + 0.5 * c * c * dt * laplacian_interior(b, spec.dx)
    _clamp_boundary(vel)
    return vel.reshape(-1)


def solve_heat(spec: GridSpec, alpha: float, dt: float, n_steps: int, u0) -> Trajectory:
    """Integrate u_t = alpha lap(u), explicit Euler, zero-Dirichlet boundaries.

    Requires alpha*dt/dx^2 <= 1/4; the update is then a convex combination of
    neighbor values, so the discrete maximum principle holds by construction.
    """
    if alpha <= 0 or dt <= 0 or n_steps < 0:
        raise ValueError("need alpha > 0, dt > 0, n_steps >= 0")
    r = alpha * dt / spec.dx**2
    if r > 0.25 * (1.0 + 1e-12):
        raise StabilityError(f"stability ratio alpha*dt/dx^2 = {r:.6g} exceeds 1/4")

    u = _as_field(u0, spec)
    _clamp_boundary(u)
    snaps = [u.copy()]
    for _ in range(n_steps):
        u = u + alpha * dt * laplacian_interior(u, spec.dx)
        _clamp_boundary(u)
        snaps.append(u.copy())

    snapshots = [FieldSnapshot(time=k * dt, values=s.reshape(-1)) for k, s in enumerate(snaps)]
    meta = {"scheme": "heat_explicit_euler", "dt": dt, "alpha": alpha, "ratio": r}
    return Trajectory(grid=spec, snapshots=snapshots, metadata=meta)


def poisson_residual(spec: GridSpec, u2d: np.ndarray, rho2d: np.ndarray, eps0: float) -> float:
    """Max-norm of lap(u) + rho/eps0 over interior nodes."""
    res = laplacian_interior(u2d, spec.dx) + rho2d / eps0
    return float(np.abs(res[1:-1, 1:-1]).max()) if spec.nx > 2 and spec.ny > 2 else 0.0


def solve_poisson_jacobi(
    spec: GridSpec, rho, eps0: float = 1.0, tol: float = 1e-8, max_iters: int = 200_000,
) -> FieldSnapshot:
    """Solve lap(u) = -rho/eps0 with zero-Dirichlet boundaries by Jacobi sweeps.

    Stops when the interior residual max-norm drops to tol; the returned
    snapshot's meta records the iteration count and final residual. Raises
    ConvergenceError if max_iters sweeps are not enough.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rho2d = _as_field(rho, spec)
    u = np.zeros_like(rho2d)
    src = spec.dx**2 * rho2d / eps0

    iterations = 0
    residual = poisson_residual(spec, u, rho2d, eps0)
    while residual > tol:
        if iterations >= max_iters:
            raise ConvergenceError(
                f"Jacobi stalled at residual {residual:.3e} after {iterations} sweeps (tol {tol:.1e})",
                iterations=iterations,
                residual=residual,
            )
        u_new = u.copy()
        u_new[1:-1, 1:-1] = 0.25 * (
            u[1:-1, 2:] + u[1:-1, :-2] + u[2:, 1:-1] + u[:-2, 1:-1] + src[1:-1, 1:-1]
        )
        u = u_new
        iterations += 1
        residual = poisson_residual(spec, u, rho2d, eps0)

    return FieldSnapshot(
        time=0.0,
        values=u.reshape(-1),
        meta={"iterations": iterations, "residual": residual, "tol": tol},
    )
