"""Solver checks against closed-form solutions.

The standing-wave and decaying-mode solutions are exact solutions of the
continuous PDEs with zero Dirichlet boundaries, so the discrete solvers must
track them to within their truncation error. The Poisson solver is checked
by manufacturing the solution: pick u, derive rho, and confirm second-order
convergence of the recovered field.
"""

import math

import numpy as np
import pytest

from mpreach.grid import GridSpec
from mpreach.pde_solvers import (
    ConvergenceError,
    FieldSnapshot,
    PhysicalConstants,
    StabilityError,
    Trajectory,
    laplacian_interior,
    poisson_residual,
    solve_heat,
    solve_poisson_jacobi,
    solve_wave,
    wave_scheme_velocity,
)


def _mode(spec: GridSpec, kx: int, ky: int) -> np.ndarray:
    """sin(kx pi x / lx) * sin(ky pi y / ly) sampled on the grid, as (ny, nx)."""
    x = np.arange(spec.nx) * spec.dx
    y = np.arange(spec.ny) * spec.dy
    return np.outer(np.sin(ky * math.pi * y / spec.ly), np.sin(kx * math.pi * x / spec.lx))


def _rel_l2(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def test_laplacian_of_quadratic_is_constant():
    spec = GridSpec(nx=9, ny=9, dx=0.125)
    x = np.arange(spec.nx) * spec.dx
    y = np.arange(spec.ny) * spec.dy
    u = np.add.outer(y**2, x**2)  # lap = 4 exactly for the 5-point stencil
    lap = laplacian_interior(u, spec.dx)
    assert np.allclose(lap[1:-1, 1:-1], 4.0, atol=1e-10)
    assert np.all(lap[0] == 0) and np.all(lap[-1] == 0)


def test_wave_standing_mode_oracle():
    # u(x,y,t) = sin(pi x)sin(pi y)cos(omega t), omega = c*pi*sqrt(2)
    spec = GridSpec(nx=51, ny=51, dx=0.02)
    c, dt, t_end = 0.5, 0.001, 2.0
    u0 = _mode(spec, 1, 1)
    traj = solve_wave(spec, c=c, dt=dt, n_steps=round(t_end / dt),
                      u0=u0, v0=np.zeros_like(u0))
    omega = c * math.pi * math.sqrt(2.0)
    exact = u0 * math.cos(omega * t_end)
    got = traj.snapshots[-1].values.reshape(spec.ny, spec.nx)
    assert traj.snapshots[-1].time == pytest.approx(t_end)
    assert _rel_l2(got, exact) < 1e-2


def test_heat_decaying_mode_oracle():
    # u(x,y,t) = sin(pi x)sin(pi y) exp(-2 alpha pi^2 t)
    spec = GridSpec(nx=11, ny=11, dx=0.1)
    alpha, dt, t_end = 1.0, 0.0004, 0.08
    u0 = _mode(spec, 1, 1)
    traj = solve_heat(spec, alpha=alpha, dt=dt, n_steps=round(t_end / dt), u0=u0)
    exact = u0 * math.exp(-2.0 * alpha * math.pi**2 * t_end)
    got = traj.snapshots[-1].values.reshape(spec.ny, spec.nx)
    assert _rel_l2(got, exact) < 2e-2


def test_wave_cfl_enforced():
    spec = GridSpec(nx=11, ny=11, dx=0.1)
    u0 = _mode(spec, 1, 1)
    # dt just over dx / (c sqrt(2)) must refuse to run
    dt_bad = 0.1 / math.sqrt(2.0) * 1.01
    with pytest.raises(StabilityError):
        solve_wave(spec, c=1.0, dt=dt_bad, n_steps=1, u0=u0, v0=np.zeros_like(u0))
    # at the limit it runs
    dt_ok = 0.1 / math.sqrt(2.0) * 0.999
    solve_wave(spec, c=1.0, dt=dt_ok, n_steps=1, u0=u0, v0=np.zeros_like(u0))


def test_heat_stability_enforced():
    spec = GridSpec(nx=11, ny=11, dx=0.1)
    u0 = _mode(spec, 1, 1)
    with pytest.raises(StabilityError):
        solve_heat(spec, alpha=1.0, dt=0.01 * 0.26, n_steps=1, u0=u0)
    solve_heat(spec, alpha=1.0, dt=0.01 * 0.25, n_steps=1, u0=u0)


def test_heat_maximum_principle_and_decay():
    spec = GridSpec(nx=21, ny=21, dx=0.05)
    rng = np.random.default_rng(3)
    u0 = np.zeros((21, 21))
    u0[1:-1, 1:-1] = rng.uniform(0.0, 1.0, size=(19, 19))
    traj = solve_heat(spec, alpha=1.0, dt=0.0006, n_steps=400, u0=u0)
    arr = traj.as_array()[:, :, 0]
    # extrema never exceed the initial range, and the sup norm shrinks
    assert arr.max() <= u0.max() + 1e-12
    assert arr.min() >= min(0.0, u0.min()) - 1e-12
    sup = np.abs(arr).max(axis=1)
    assert sup[-1] < 0.5 * sup[0]


def test_wave_leapfrog_energy_bounded():
    spec = GridSpec(nx=21, ny=21, dx=0.05)
    u0 = _mode(spec, 2, 1)
    traj = solve_wave(spec, c=1.0, dt=0.01, n_steps=2000, u0=u0, v0=np.zeros_like(u0))
    arr = traj.as_array()
    assert np.all(np.isfinite(arr))
    assert np.abs(arr).max() < 2.0 * np.abs(u0).max()


def test_wave_time_reversal_is_exact():
    # replaying from (u_n, -v_n) with the scheme-consistent velocity must
    # walk the discrete trajectory backwards to machine precision
    spec = GridSpec(nx=17, ny=17, dx=1.0 / 16)
    rng = np.random.default_rng(11)
    u0 = np.zeros((17, 17))
    u0[1:-1, 1:-1] = rng.standard_normal((15, 15))
    c, dt, n = 1.0, 0.02, 60
    fwd = solve_wave(spec, c=c, dt=dt, n_steps=n, u0=u0, v0=np.zeros_like(u0))
    a = fwd.snapshots[-2].values.reshape(spec.ny, spec.nx)
    b = fwd.snapshots[-1].values.reshape(spec.ny, spec.nx)
    v_end = wave_scheme_velocity(spec, c=c, dt=dt, u_prev=a, u_curr=b)
    back = solve_wave(spec, c=c, dt=dt, n_steps=n, u0=b, v0=-v_end)
    fwd_arr = fwd.as_array()
    back_arr = back.as_array()
    err = np.abs(back_arr - fwd_arr[::-1]).max()
    assert err < 1e-8


def test_poisson_manufactured_convergence():
    # u = sin(pi x) sin(pi y) on the unit square, rho = 2 pi^2 u
    errors = []
    for n in (11, 21):
        spec = GridSpec(nx=n, ny=n, dx=1.0 / (n - 1))
        u_exact = _mode(spec, 1, 1)
        rho = 2.0 * math.pi**2 * u_exact
        snap = solve_poisson_jacobi(spec, rho, eps0=1.0, tol=1e-10)
        got = snap.values.reshape(spec.ny, spec.nx)
        errors.append(np.abs(got - u_exact).max())
    ratio = errors[0] / errors[1]
    assert 3.2 <= ratio <= 4.8


def test_poisson_residual_small_at_solution():
    spec = GridSpec(nx=15, ny=15, dx=1.0 / 14)
    rng = np.random.default_rng(5)
    rho = np.zeros((15, 15))
    rho[1:-1, 1:-1] = rng.standard_normal((13, 13))
    snap = solve_poisson_jacobi(spec, rho, eps0=1.0, tol=1e-9)
    assert poisson_residual(spec, snap.values.reshape(15, 15), rho, eps0=1.0) <= 1e-9
    assert snap.meta["iterations"] > 0


def test_poisson_zero_charge_gives_zero_field():
    spec = GridSpec(nx=8, ny=8, dx=0.1)
    snap = solve_poisson_jacobi(spec, np.zeros((8, 8)), tol=1e-12)
    assert np.abs(snap.values).max() == 0.0


def test_poisson_convergence_error_carries_state():
    spec = GridSpec(nx=21, ny=21, dx=0.05)
    rho = _mode(spec, 1, 1)
    with pytest.raises(ConvergenceError) as info:
        solve_poisson_jacobi(spec, rho, tol=1e-12, max_iters=10)
    assert info.value.iterations == 10
    assert info.value.residual > 1e-12


def test_snapshot_validation():
    with pytest.raises(ValueError):
        FieldSnapshot(time=0.0, values=np.array([np.nan, 1.0]))
    snap = FieldSnapshot(time=0.5, values=np.arange(4.0))
    assert snap.values.shape == (4, 1)


def test_trajectory_as_array_shape():
    spec = GridSpec(nx=5, ny=5, dx=0.25)
    u0 = _mode(spec, 1, 1)
    traj = solve_heat(spec, alpha=1.0, dt=0.01, n_steps=3, u0=u0)
    assert isinstance(traj, Trajectory)
    arr = traj.as_array()
    assert arr.shape == (4, 25, 1)
    assert [s.time for s in traj.snapshots] == pytest.approx([0.0, 0.01, 0.02, 0.03])


def test_constants_must_be_positive():
    with pytest.raises(ValueError):
        PhysicalConstants(c=-1.0)
    with pytest.raises(ValueError):
        PhysicalConstants(alpha=0.0)
