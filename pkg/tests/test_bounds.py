import math

import pytest

from mpreach.bounds import (
    BoundSpec,
    bound_ratio,
    bound_spec_for,
    check_under_reach,
    mpi_lower_bound,
)

GNN_DT = 2.0 / 9


def test_hyperbolic_ratio_formula():
    spec = BoundSpec(pde_class="hyperbolic", dx=0.04, c=0.5, dt=GNN_DT)
    assert bound_ratio(spec) == pytest.approx(math.sqrt(2.0) * 0.5 * GNN_DT / 0.04)


def test_geometric_ratio_formula():
    spec = BoundSpec(pde_class="elliptic", dx=0.1, L=1.0)
    assert bound_ratio(spec) == pytest.approx(10.0)


@pytest.mark.parametrize(
    "spec, expected",
    [
        # wave rows: strictly-more-than the CFL-style ratio
        (BoundSpec(pde_class="hyperbolic", dx=0.04, c=0.5, dt=GNN_DT), 4),
        (BoundSpec(pde_class="hyperbolic", dx=0.02, c=0.5, dt=GNN_DT), 8),
        # diffusion rows: hops to cross the domain
        (BoundSpec(pde_class="parabolic", dx=0.1, L=1.0), 10),
        (BoundSpec(pde_class="parabolic", dx=0.1, L=2.0), 20),
        (BoundSpec(pde_class="elliptic", dx=0.1, L=1.0), 10),
        (BoundSpec(pde_class="elliptic", dx=0.05, L=1.0), 20),
    ],
)
def test_reference_rows(spec, expected):
    assert mpi_lower_bound(spec) == expected


def test_hyperbolic_integer_ratio_still_needs_one_more():
    # ratio exactly 3 means 3 hops are not strictly enough
    spec = BoundSpec(pde_class="hyperbolic", dx=1.0, c=1.0, dt=3.0 / math.sqrt(2.0))
    assert bound_ratio(spec) == pytest.approx(3.0)
    assert mpi_lower_bound(spec) == 4


def test_hyperbolic_just_below_integer():
    spec = BoundSpec(pde_class="hyperbolic", dx=1.0, c=1.0, dt=2.9 / math.sqrt(2.0))
    assert mpi_lower_bound(spec) == 3


def test_geometric_exact_integer_is_kept():
    assert mpi_lower_bound(BoundSpec(pde_class="elliptic", dx=0.25, L=1.0)) == 4


def test_geometric_fractional_rounds_up():
    assert mpi_lower_bound(BoundSpec(pde_class="elliptic", dx=0.3, L=1.0)) == 4


def test_tiny_ratio_clamps_to_one():
    spec = BoundSpec(pde_class="hyperbolic", dx=1.0, c=1e-6, dt=1e-6)
    assert mpi_lower_bound(spec) == 1


def test_float_noise_near_integer_is_snapped():
    # 0.1 * 10 accumulates to 1.0000000000000002-ish; the bound must not
    # jump to 11 because of that
    L = 0.1 * 10
    spec = BoundSpec(pde_class="parabolic", dx=0.1, L=L)
    assert mpi_lower_bound(spec) == 10


def test_bound_spec_for_dispatch():
    wave = bound_spec_for("wave", dx=0.04, c=0.5, gnn_dt=GNN_DT)
    heat = bound_spec_for("heat", dx=0.1, length=1.0)
    poisson = bound_spec_for("poisson", dx=0.05, length=1.0)
    assert wave.pde_class == "hyperbolic"
    assert heat.pde_class == "parabolic"
    assert poisson.pde_class == "elliptic"
    assert [mpi_lower_bound(s) for s in (wave, heat, poisson)] == [4, 10, 20]


def test_bound_spec_for_rejects_unknown_problem():
    with pytest.raises(ValueError):
        bound_spec_for("advection", dx=0.1, c=1.0, gnn_dt=0.1)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(pde_class="hyperbolic", dx=0.1),  # missing c and dt
        dict(pde_class="hyperbolic", dx=0.1, c=1.0),  # missing dt
        dict(pde_class="elliptic", dx=0.1),  # missing L
        dict(pde_class="banana", dx=0.1, L=1.0),
        dict(pde_class="elliptic", dx=-0.1, L=1.0),
        dict(pde_class="elliptic", dx=0.1, L=0.0),
    ],
)
def test_invalid_specs_rejected(kwargs):
    with pytest.raises(ValueError):
        BoundSpec(**kwargs)


def test_classification_under_at_above():
    spec = BoundSpec(pde_class="elliptic", dx=0.1, L=1.0)  # bound 10
    assert check_under_reach(2, spec) == "under"
    assert check_under_reach(10, spec) == "at_bound"
    assert check_under_reach(14, spec) == "above"
