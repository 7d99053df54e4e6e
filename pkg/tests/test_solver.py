import math

import numpy as np
import pytest

from polyslab import QuadratureSpec, maxwellian_field, mutations, norms, solver
from polyslab.phase_space import DistributionField

QUAD = QuadratureSpec(n_samples=32, seed=12345)


@pytest.fixture
def bc(small_grid, params):
    return solver.default_boundary(small_grid, params)


def test_boundary_lives_on_incoming_half_spaces(bc, small_grid):
    v1 = small_grid.velocities[..., None, 0]
    assert np.all(bc.f_L[np.broadcast_to(v1 < 0, bc.f_L.shape)] == 0)
    assert np.all(bc.f_R[np.broadcast_to(v1 > 0, bc.f_R.shape)] == 0)
    assert bc.f_L.max() > 0 and bc.f_R.max() > 0


@pytest.mark.parametrize("side, message", [
    ({"n": 1.0, "T": 3.0}, "a\\*T < 1"),
    ({"n": -1.0, "T": 1.0}, "non-negative"),
    ({"n": 1.0, "T": 0.0}, "positive"),
    ({"n": 1.0, "T": 1.0, "beta": -1.0}, "beta"),
])
def test_make_boundary_rejects_bad_sides(small_grid, params, side, message):
    with pytest.raises(solver.BoundaryError, match=message):
        solver.make_boundary("cutoff_maxwellian", {"left": side, "right": {}}, small_grid, params)


def test_unknown_boundary_family(small_grid, params):
    with pytest.raises(solver.BoundaryError):
        solver.make_boundary("diffuse", {}, small_grid, params)


def test_half_maxwellian_warns(small_grid, params):
    with pytest.warns(UserWarning, match="beta=0.0"):
        bc = solver.make_boundary("half_maxwellian", {"left": {"n": 1.0}, "right": {"n": 0.0}}, small_grid, params)
    assert bc.warnings


def test_attenuation_trivial_cases(small_grid, params):
    M = maxwellian_field(small_grid)
    v = np.array([0.5, 0.0, 0.0])
    assert solver.attenuation(M, 0.3, 0.3, v, 1.0, params) == 1.0
    assert solver.attenuation(small_grid.zeros(), 0.0, 1.0, v, 1.0, params) == 1.0
    with pytest.raises(ValueError):
        solver.attenuation(M, 0.5, 0.2, v, 1.0, params)


def test_attenuation_constant_loss(small_grid, params):
    # x-independent field: exp(-(eps/|v1|) L (x_to - x_from))
    M = maxwellian_field(small_grid)
    v, I = np.array([-0.7, 0.2, 0.0]), 0.4
    from polyslab import collision

    L = float(collision.loss_frequency(M, 0, v, I, params).value)
    got = solver.attenuation(M, 0.25, 1.0, v, I, params)
    assert got == pytest.approx(math.exp(-params.epsilon / 0.7 * L * 0.75), rel=1e-12)
    assert 0 < got <= 1


def test_psi_of_zero_is_free_streaming_boundary(bc, small_grid, params):
    out = solver.apply_psi(small_grid.zeros(), bc, params, QUAD)
    np.testing.assert_array_equal(out.values, np.broadcast_to(bc.f_LR, small_grid.shape))


def test_psi_keeps_boundary_values_exactly(bc, small_grid, params):
    f = maxwellian_field(small_grid, 0.1, 0.8)
    out = solver.apply_psi(f, bc, params, QUAD).values
    v1 = small_grid.velocities[..., None, 0]
    left = np.broadcast_to(v1 > 0, bc.f_L.shape)
    right = np.broadcast_to(v1 < 0, bc.f_R.shape)
    np.testing.assert_array_equal(out[0][left], bc.f_L[left])
    np.testing.assert_array_equal(out[-1][right], bc.f_R[right])
    assert np.all(out >= 0)


def test_maxwellian_is_a_fixed_point(small_grid, params):
    M = maxwellian_field(small_grid, 0.3, 1.0)
    bc = solver.make_boundary("custom_table", {"left": M.values[0], "right": M.values[0]}, small_grid, params)
    out = solver.apply_psi(M, bc, params, QUAD)
    # collisions leaving the truncated box only matter in the far tail
    np.testing.assert_allclose(out.values, M.values, rtol=0, atol=1e-8 * M.values.max())


def test_attenuation_sign_mutation_breaks_fixed_point(small_grid, params):
    M = maxwellian_field(small_grid, 0.3, 1.0)
    bc = solver.make_boundary("custom_table", {"left": M.values[0], "right": M.values[0]}, small_grid, params)
    with mutations.mutated("attenuation_sign"):
        out = solver.apply_psi(M, bc, params, QUAD)
    assert np.max(np.abs(out.values - M.values)) > 1e-4


def test_custom_table_must_be_non_negative(small_grid, params):
    bad = -np.ones(small_grid.node_shape)
    with pytest.raises(solver.BoundaryError):
        solver.make_boundary("custom_table", {"left": bad, "right": bad}, small_grid, params)


def test_zero_boundary_gives_zero_solution(small_grid, params):
    bc = solver.make_boundary("cutoff_maxwellian", {"left": {"n": 0.0}, "right": {"n": 0.0}}, small_grid, params)
    f, rep = solver.picard_solve(small_grid.zeros(), bc, params, QUAD, tol=1e-12)
    assert not np.any(f.values)
    assert rep.converged and rep.iterations == 1


def test_picard_converges_geometrically(bc, small_grid, params):
    f, rep = solver.picard_solve(small_grid.zeros(), bc, params, QUAD)
    assert rep.converged
    assert rep.residuals[-1] <= rep.tol
    assert rep.fitted_rate is not None and rep.fitted_rate < 0.2
    assert rep.fresh_seed_residual is not None
    # a converged field is a fixed point up to the tolerance
    samples = solver.frozen_samples(small_grid, params, QUAD, solver.boundary_proposal(bc, QUAD))
    g = solver.apply_psi(f, bc, params, QUAD, samples)
    assert norms.norm0(g.values - f.values, small_grid, params.weight_a) <= rep.tol


def test_picard_rejects_negative_start(bc, small_grid, params):
    with pytest.raises(ValueError):
        solver.picard_solve(DistributionField(small_grid, -np.ones(small_grid.shape), check=False),
                            bc, params, QUAD)


def test_divergence_raises_and_auto_halving_recovers(bc, small_grid, params, monkeypatch):
    real = solver.apply_psi_detailed

    def expanding_above(eps_max):
        # an expanding map for large epsilon stands in for a run that blows up
        def psi(f, bc_, p, quad, samples=None):
            res = real(f, bc_, p, quad, samples)
            if p.epsilon > eps_max:
                res.field = DistributionField(small_grid, 2 * f.values + res.field.values, check=False)
            return res
        return psi

    monkeypatch.setattr(solver, "apply_psi_detailed", expanding_above(0.1))
    hot = params.replace(epsilon=0.8)
    with pytest.raises(solver.DivergenceError) as err:
        solver.picard_solve(small_grid.zeros(), bc, hot, QUAD, max_iter=40, revalidate=False)
    assert err.value.report.diverged
    f, rep = solver.picard_solve(small_grid.zeros(), bc, hot, QUAD, max_iter=40, auto_halve=True,
                                 revalidate=False)
    assert rep.converged and rep.halvings == 3
    assert rep.epsilon == pytest.approx(0.1)
    with pytest.raises(solver.DivergenceError):
        solver.picard_solve(small_grid.zeros(), bc, hot, QUAD, max_iter=40, auto_halve=True,
                            max_halvings=2, revalidate=False)


def test_fitted_rate_of_exact_geometric_sequence():
    assert solver.fitted_rate([5.0, 1.0, 0.1, 0.01, 0.001]) == pytest.approx(0.1)
    assert solver.fitted_rate([1.0, 0.5]) is None


def test_contraction_ratio_of_identical_fields_rejected(bc, small_grid, params):
    f = small_grid.zeros()
    with pytest.raises(ValueError):
        solver.measure_contraction(f, f, bc, params, [0.1], QUAD)


def test_moments_of_maxwellian(params):
    from polyslab import GridSpec, build_grid

    grid = build_grid(GridSpec(n_x=3, n_v=20, n_I=10, v_max=7.0))
    M = maxwellian_field(grid, 0.5, 0.8, (0.2, 0.0, 0.0), alpha=1.0)
    rows = solver.moments(M, alpha=1.0)["profiles"]
    for row in rows:
        assert row["n"] == pytest.approx(0.5, rel=1e-6)
        assert row["u"][0] == pytest.approx(0.2, abs=1e-6)
        assert row["T_tr"] == pytest.approx(0.8, rel=1e-5)
        assert row["T_int"] == pytest.approx(0.8, rel=1e-5)
        assert row["flux"] == pytest.approx(0.1, rel=1e-5)
    assert solver.moments(grid.zeros())["profiles"][0]["n"] is None


def test_invariance_constants_in_log_space(bc, params):
    c = solver.invariance_constants(bc, params)
    assert not c["degenerate"]
    assert c["a1"] == pytest.approx(2 * norms.triple(bc.f_LR, bc.grid, params.gamma, params.weight_a))
    assert c["log_a3"] > math.log(c["a1"] / 2)
    assert c["log_a4"] > math.log(c["a1"] / 2)
