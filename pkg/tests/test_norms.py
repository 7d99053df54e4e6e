import math

import numpy as np
import pytest

from polyslab import GridSpec, build_grid, maxwellian_field, norms, solver
from polyslab.phase_space import CollisionParams

A = 0.5


@pytest.fixture(scope="module")
def fine():
    return build_grid(GridSpec(n_x=2, n_v=24, n_I=10, v_max=8.0))


def singular_oracle(n, T, a, k):
    """int phi |v|^{-k} M for the centred Maxwellian with alpha = 0."""
    Tp = T / (1 - a * T)
    moment = 2 ** (-k / 2) * math.gamma((3 - k) / 2) / math.gamma(1.5)
    return n * (1 - a * T) ** -2.5 * Tp ** (-k / 2) * moment


def plane_oracle(n, T, a):
    """Plane integral of phi M over a plane through the centre, alpha = 0."""
    return n * (1 - a * T) ** -2 / math.sqrt(2 * math.pi * T)


def test_norm0_closed_form(fine):
    M = maxwellian_field(fine, 0.5, 1.0)
    assert norms.norm0(M, fine, A) == pytest.approx(0.5 * (1 - A) ** -2.5, rel=2e-3)


def test_norm0_takes_sup_over_x(fine):
    M = maxwellian_field(fine, 1.0, 1.0)
    vals = M.values.copy()
    vals[0] *= 0.5
    assert norms.norm0(vals, fine, A) == pytest.approx(norms.norm0(M, fine, A))


def test_norm0_is_absolutely_homogeneous(small_grid):
    M = maxwellian_field(small_grid, 1.0, 0.8)
    assert norms.norm0(3 * M.values, small_grid, A) == pytest.approx(3 * norms.norm0(M, small_grid, A))


def test_norm0_rejects_infinite_weight(small_grid):
    M = maxwellian_field(small_grid, 1.0, 1.0)
    with pytest.raises(FloatingPointError):
        norms.norm0(M, small_grid, 800.0)


@pytest.mark.parametrize("k", [0.25, 0.5, 0.9])
def test_singular_norm_closed_form(fine, k):
    M = maxwellian_field(fine, 1.0, 1.0)
    value, w = norms.norm_k(M, fine, k, A)
    assert value == pytest.approx(singular_oracle(1.0, 1.0, A, k), rel=2e-2)
    assert np.linalg.norm(w) < 0.5


def test_singular_norm_with_k_zero_is_norm0(small_grid):
    M = maxwellian_field(small_grid, 1.0, 1.0)
    assert norms.norm_k(M, small_grid, 0.0, A)[0] == pytest.approx(norms.norm0(M, small_grid, A), rel=1e-12)


def test_plane_norm_closed_form(fine):
    M = maxwellian_field(fine, 1.0, 1.0)
    value, plane = norms.norm_plane(M, fine, A)
    assert value == pytest.approx(plane_oracle(1.0, 1.0, A), rel=2e-2)
    assert abs(plane["offset"]) < 0.3


def test_plane_normal_must_be_unit():
    with pytest.raises(ValueError):
        norms.Plane((1.0, 1.0, 0.0), 0.0)


def test_mollified_plane_norm_converges(fine):
    M = maxwellian_field(fine, 1.0, 1.0)
    plane = norms.Plane((0.0, 0.0, 1.0), 0.0)
    vals = [norms.norm_plane_mollified(M, fine, A, plane, am) for am in (1.0, 4.0)]
    target = plane_oracle(1.0, 1.0, A)
    assert abs(vals[1] - target) < abs(vals[0] - target)


def test_norm_report_triple_is_the_sum(small_grid):
    rep = norms.norm_report(maxwellian_field(small_grid, 1.0, 1.0), small_grid, 0.5, A)
    assert rep.triple == pytest.approx(rep.norm0 + rep.norm_singular + rep.norm_plane)


def _boundary(beta, grid):
    p = CollisionParams()
    fam = "cutoff_maxwellian" if beta else "half_maxwellian"
    side = {"n": 1.0, "T": 1.0, "beta": beta}
    return solver.make_boundary(fam, {"left": side, "right": side}, grid, p)


def test_boundary_refinement_separates_beta_one_from_beta_zero():
    grid = build_grid(GridSpec(n_x=2, n_v=(8, 8, 8), n_I=4, v_max=5.0))
    good = _boundary(1.0, grid).admissibility(1.0, A)
    bad = _boundary(0.0, grid).admissibility(1.0, A)
    assert not good["divergent"]
    assert bad["divergent"]
    assert bad["increments"][-1] > 0.3 * bad["increments"][0]


def test_boundary_refinement_needs_three_levels(small_grid):
    with pytest.raises(ValueError):
        norms.boundary_refinement(lambda g: g.zeros().values[0], small_grid, 1.0, A, levels=2)
