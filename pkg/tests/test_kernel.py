import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyslab import kernel, mutations
from oracles import c_alpha_oracle, fd_volume_ratio, random_chart_points

finite = st.floats(-5, 5, allow_nan=False)
vec = st.tuples(finite, finite, finite).map(np.array)
energy = st.floats(0, 10, allow_nan=False)
unit = st.floats(0.01, 0.99)


def test_c_alpha_zero_is_16pi_over_15():
    assert kernel.c_alpha(0.0) == pytest.approx(16 * math.pi / 15, rel=1e-15)
    assert round(kernel.c_alpha(0.0), 5) == 3.35103


@pytest.mark.parametrize("alpha", [0.0, 1.0, 2.0])
def test_c_alpha_matches_polynomial_gauss_rule(alpha):
    assert kernel.c_alpha(alpha) == pytest.approx(c_alpha_oracle(alpha), rel=1e-12)


def test_c_alpha_rejects_negative_alpha():
    with pytest.raises(ValueError):
        kernel.c_alpha(-0.5)


@given(vec, vec, energy, energy, unit, unit, vec)
def test_forward_conserves_momentum_and_energy(v, vs, I, Is, r, R, d):
    n = np.linalg.norm(d)
    sigma = d / n if n > 1e-3 else np.array([0.0, 0.0, 1.0])
    vp, vsp, Ip, Isp = kernel.bl_forward(v, vs, I, Is, r, R, sigma)
    np.testing.assert_allclose(vp + vsp, v + vs, atol=1e-12)
    E = kernel.total_energy(v, vs, I, Is)
    assert kernel.total_energy(vp, vsp, Ip, Isp) == pytest.approx(E, rel=1e-12, abs=1e-12)
    # kinetic energy |v|^2/2 summed over the pair, plus internal energies
    before = 0.5 * (v @ v + vs @ vs) + I + Is
    after = 0.5 * (vp @ vp + vsp @ vsp) + Ip + Isp
    assert after == pytest.approx(before, rel=1e-12, abs=1e-12)


@settings(max_examples=200)
@given(vec, vec, st.floats(0.01, 10), st.floats(0.01, 10), unit, unit, vec)
def test_inverse_recovers_parameters(v, vs, I, Is, r, R, d):
    n = np.linalg.norm(d)
    sigma = d / n if n > 1e-3 else np.array([1.0, 0.0, 0.0])
    r2, R2, s2 = kernel.bl_inverse(*kernel.bl_forward(v, vs, I, Is, r, R, sigma))
    assert r2 == pytest.approx(r, abs=1e-10)
    assert R2 == pytest.approx(R, abs=1e-10)
    np.testing.assert_allclose(s2, sigma, atol=1e-9)


def test_inverse_degenerate_conventions():
    r, R, sigma = kernel.bl_inverse(np.zeros(3), np.zeros(3), 0.0, 1.0)
    assert (r, R) == (0.0, 0.0)
    np.testing.assert_array_equal(sigma, [1.0, 0.0, 0.0])
    r, _, _ = kernel.bl_inverse(np.array([1.0, 0, 0]), np.zeros(3), 0.0, 0.0)
    assert r == 0.5
    with pytest.raises(ValueError):
        kernel.bl_inverse(np.zeros(3), np.zeros(3), 0.0, 0.0)


def test_jacobian_matches_finite_difference_volume_ratio():
    rng = np.random.default_rng(7)
    for y in random_chart_points(rng, 50):
        ratio, R_prime = fd_volume_ratio(y)
        assert ratio == pytest.approx(kernel.jacobian_factor(y[9], R_prime), rel=1e-6)


def test_jacobian_rejects_boundary_values():
    with pytest.raises(ValueError):
        kernel.jacobian_factor(0.0, 0.5)


def test_wrong_jacobian_mutation_changes_value():
    ref = kernel.jacobian_factor(0.3, 0.6)
    with mutations.mutated("wrong_jacobian"):
        assert kernel.jacobian_factor(0.3, 0.6) != pytest.approx(ref)
    assert kernel.jacobian_factor(0.3, 0.6) == ref


def test_unknown_mutation_is_rejected():
    with pytest.raises(ValueError):
        with mutations.mutated("nope"):
            pass


@pytest.mark.parametrize("gamma", [0.0, 0.3, 0.7])
@pytest.mark.parametrize("c", [0.0, 0.4, 1.0, 2.5])
def test_sigma_integral_closed_form_matches_quadratures(gamma, c):
    R, E = 0.4, 2.0
    closed = kernel.sigma_integral_closed_form(c, R, E, gamma)
    if c > 0:
        assert closed == pytest.approx(kernel.sigma_integral_quadrature(c, R, E, gamma), rel=1e-8)
    assert closed <= kernel.sigma_integral_bound(R, E, gamma) * (1 + 1e-12)


def test_sigma_integral_sphere_rule_agrees_off_singularity():
    v, vs, w = np.array([0.3, -0.2, 0.5]), np.array([-0.4, 0.1, 0.0]), np.array([2.0, 1.0, -1.0])
    R, I, Is, gamma = 0.3, 0.5, 0.2, 0.5
    E = float(kernel.total_energy(v, vs, I, Is))
    c = np.linalg.norm(0.5 * (v + vs) + w) / math.sqrt(R * E)
    direct = kernel.sigma_integral_sphere(v, vs, w, R, I, Is, gamma)
    assert direct == pytest.approx(float(kernel.sigma_integral_closed_form(c, R, E, gamma)), rel=1e-8)


def test_sigma_integral_gamma_one_is_exactly_4pi():
    vals = kernel.sigma_integral_closed_form(np.array([0.0, 0.5, 3.0]), 0.5, 1.0, 1.0)
    assert np.all(vals == 4 * np.pi)


def test_sigma_integral_rejects_zero_energy():
    with pytest.raises(ValueError):
        kernel.sigma_integral_closed_form(0.5, 0.0, 1.0, 0.5)


@pytest.mark.parametrize("model", ["total_energy", "detached_kinetic_internal", "detached_per_particle"])
def test_kernel_envelope_sandwich(model):
    rng = np.random.default_rng(3)
    n = 20_000
    v, vs = rng.normal(size=(n, 3)), rng.normal(size=(n, 3)) * 2
    I, Is = rng.exponential(size=n), rng.exponential(size=n)
    r, R = rng.uniform(size=n), rng.uniform(size=n)
    for gamma in (0.0, 0.5, 1.0):
        B = kernel.cross_section(model, v, vs, I, Is, r, R, gamma)
        lo, hi = kernel.kernel_envelope(model, r, R, gamma)
        S = kernel.envelope_sum(v, vs, I, Is, gamma)
        assert np.all(lo * S <= B * (1 + 1e-12))
        assert np.all(B <= hi * S * (1 + 1e-12))


def test_unknown_kernel_model():
    with pytest.raises(ValueError, match="unknown kernel model"):
        kernel.cross_section("hard_spheres", np.zeros(3), np.ones(3), 1, 1, 0.5, 0.5, 1.0)


def test_measure_weight_dropped_exponent_mutation():
    ref = kernel.base_measure(0.3, 0.5, 1.0)
    with mutations.mutated("dropped_R_exponent"):
        assert kernel.base_measure(0.3, 0.5, 1.0) == pytest.approx(ref / 0.5)
