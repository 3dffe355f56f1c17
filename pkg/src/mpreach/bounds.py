"""Lower bounds on message-passing iterations per PDE class.

Hyperbolic problems bound the per-step information speed the way a CFL
condition bounds an explicit scheme: the messages must outrun the physical
wave, M > sqrt(2) * c * dt / dx on a square grid. Parabolic and elliptic
problems have no finite propagation speed, so every inference step must
reach across the whole domain: M = ceil(L / dx).

dt here is the time stride the surrogate advances per step (the stride
between kept snapshots), not the fine step of the generating solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

HYPERBOLIC = "hyperbolic"
PARABOLIC = "parabolic"
ELLIPTIC = "elliptic"
PDE_CLASSES = (HYPERBOLIC, PARABOLIC, ELLIPTIC)

# problem name -> PDE class, shared by the dataset and evaluation layers
PROBLEM_CLASSES = {"wave": HYPERBOLIC, "heat": PARABOLIC, "poisson": ELLIPTIC}

# reach classifications returned by check_under_reach
UNDER = "under"
AT_BOUND = "at_bound"
ABOVE = "above"

# ratios this close to a whole number are treated as exactly integral,
# so float dust in L/dx cannot shift the bound by one
_INT_SNAP = 1e-9


@dataclass(frozen=True)
class BoundSpec:
    """Constants feeding the bound: c and dt for hyperbolic, L for the rest."""

    pde_class: str
    dx: float
    c: float | None = None
    dt: float | None = None
    L: float | None = None

    def __post_init__(self):
        if self.pde_class not in PDE_CLASSES:
            raise ValueError(f"unknown pde_class {self.pde_class!r}")
        if self.dx is None or self.dx <= 0:
            raise ValueError("dx must be positive")
        if self.pde_class == HYPERBOLIC:
            if self.c is None or self.dt is None:
                raise ValueError("hyperbolic bound needs both c and dt")
            if self.c <= 0 or self.dt <= 0:
                raise ValueError("c and dt must be positive")
        else:
            if self.L is None:
                raise ValueError(f"{self.pde_class} bound needs the domain size L")
            if self.L <= 0:
                raise ValueError("L must be positive")


def bound_ratio(spec: BoundSpec) -> float:
    """The raw real-valued ratio the bound rounds up from."""
    if spec.pde_class == HYPERBOLIC:
        return math.sqrt(2.0) * spec.c * spec.dt / spec.dx
    return spec.L / spec.dx


def _snap(x: float) -> float:
    nearest = round(x)
    if abs(x - nearest) <= _INT_SNAP * max(1.0, abs(x)):
        return float(nearest)
    return x


def mpi_lower_bound(spec: BoundSpec) -> int:
    """Minimum message-passing iterations for the problem described by spec.

    Hyperbolic: smallest integer strictly greater than sqrt(2)*c*dt/dx.
    Parabolic/elliptic: ceil(L/dx). Both clamped to at least 1 (zero
    iterations would leave the processor out entirely).
    """
    ratio = _snap(bound_ratio(spec))
    if spec.pde_class == HYPERBOLIC:
        m = math.floor(ratio) + 1
    else:
        m = math.ceil(ratio)
    return max(1, m)


def check_under_reach(m_model: int, spec: BoundSpec) -> str:
    """Classify a model's iteration count against the lower bound."""
    if m_model < 0:
        raise ValueError("iteration count must be >= 0")
    m_star = mpi_lower_bound(spec)
    if m_model < m_star:
        return UNDER
    if m_model == m_star:
        return AT_BOUND
    return ABOVE


def bound_spec_for(problem: str, dx: float, c: float | None = None,
                   gnn_dt: float | None = None, length: float | None = None) -> BoundSpec:
    """BoundSpec for a named problem.

    Hyperbolic problems take the wave speed and the surrogate's time stride;
    geometric (parabolic/elliptic) ones take the largest domain extent.
    """
    if problem not in PROBLEM_CLASSES:
        raise ValueError(f"unknown problem {problem!r}, expected one of {sorted(PROBLEM_CLASSES)}")
    pde_class = PROBLEM_CLASSES[problem]
    if pde_class == HYPERBOLIC:
        return BoundSpec(pde_class=pde_class, dx=dx, c=c, dt=gnn_dt)
    return BoundSpec(pde_class=pde_class, dx=dx, L=length)
