"""Borgnakke-Larsen collision microphysics.

All functions broadcast over leading axes; velocities carry a trailing axis of
length 3. A collision pair (v, v_*, I, I_*) and parameters (r, R, sigma) map to
post-collision velocities and internal energies conserving momentum and the
total energy E = |v - v_*|^2/4 + I + I_*.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

from . import mutations
from .phase_space import KERNEL_MODELS

# canonical parameters on measure-zero degenerate sets
DEGENERATE_R_SPLIT = 0.5
DEGENERATE_SIGMA = np.array([1.0, 0.0, 0.0])


def _sq(a):
    return np.sum(a * a, axis=-1)


def total_energy(v, v_star, I, I_star):
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    return 0.25 * _sq(v - v_star) + np.asarray(I, dtype=float) + np.asarray(I_star, dtype=float)


def bl_forward(v, v_star, I, I_star, r, R, sigma):
    """Post-collision state ``(v', v'_*, I', I'_*)``."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    r = np.asarray(r, dtype=float)
    R = np.asarray(R, dtype=float)
    E = total_energy(v, v_star, I, I_star)
    centre = 0.5 * (v + v_star)
    kick = np.sqrt(R * E)[..., None] * np.asarray(sigma, dtype=float)
    v_prime = centre + kick
    v_star_prime = centre + kick if mutations.active("sigma_sign") else centre - kick
    internal = (1.0 - R) * E
    return v_prime, v_star_prime, r * internal, (1.0 - r) * internal


def bl_inverse(v_prime, v_star_prime, I_prime, I_star_prime):
    """Recover ``(r, R, sigma)`` from a post-collision state.

    r = I'/(I' + I'_*), R = |v' - v'_*|^2 / (4E), sigma = (v' - v'_*)/|v' - v'_*|.
    Zero internal energy gives r = 1/2 and coincident velocities give
    sigma = (1, 0, 0). Zero total energy is rejected.
    """
    v_prime = np.asarray(v_prime, dtype=float)
    v_star_prime = np.asarray(v_star_prime, dtype=float)
    I_prime = np.asarray(I_prime, dtype=float)
    I_star_prime = np.asarray(I_star_prime, dtype=float)
    E = total_energy(v_prime, v_star_prime, I_prime, I_star_prime)
    if np.any(E <= 0):
        raise ValueError("bl_inverse is undefined for zero total energy")
    internal = I_prime + I_star_prime
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(internal > 0, I_prime / np.where(internal > 0, internal, 1.0), DEGENERATE_R_SPLIT)
    u = v_prime - v_star_prime
    speed2 = _sq(u)
    R = np.clip(0.25 * speed2 / E, 0.0, 1.0)
    speed = np.sqrt(speed2)
    safe = np.where(speed > 0, speed, 1.0)[..., None]
    sigma = np.where(speed[..., None] > 0, u / safe, DEGENERATE_SIGMA)
    return r, R, sigma


def jacobian_factor(R, R_prime):
    """Volume ratio R^{1/2}(1-R) / (R'^{1/2}(1-R')) of the pre-to-post map."""
    R = np.asarray(R, dtype=float)
    R_prime = np.asarray(R_prime, dtype=float)
    if np.any((R <= 0) | (R >= 1) | (R_prime <= 0) | (R_prime >= 1)):
        raise ValueError("jacobian_factor needs R, R' strictly inside (0, 1)")
    if mutations.active("wrong_jacobian"):
        return np.sqrt(R / R_prime)
    return np.sqrt(R / R_prime) * (1.0 - R) / (1.0 - R_prime)


def _check_model(model):
    if model not in KERNEL_MODELS:
        raise ValueError(f"unknown kernel model {model!r}; expected one of {KERNEL_MODELS}")


def cross_section(model, v, v_star, I, I_star, r, R, gamma):
    """Collision kernel B for one of the three supported models."""
    _check_model(model)
    h = 0.5 * gamma
    if model == "total_energy":
        return total_energy(v, v_star, I, I_star) ** h
    rel = np.sqrt(_sq(np.asarray(v, dtype=float) - np.asarray(v_star, dtype=float)))
    R = np.asarray(R, dtype=float)
    I = np.asarray(I, dtype=float)
    I_star = np.asarray(I_star, dtype=float)
    if model == "detached_kinetic_internal":
        return R ** h * rel ** gamma + (1.0 - R) ** h * (I + I_star) ** h
    r = np.asarray(r, dtype=float)
    return R ** h * rel ** gamma + (r * (1.0 - R) * I) ** h + ((1.0 - r) * (1.0 - R) * I_star) ** h


def kernel_envelope(model, r, R, gamma):
    """Lower/upper factors (Phi, Psi) with Phi * S <= B <= Psi * S,
    S = |v - v_*|^gamma + (I + I_*)^{gamma/2}."""
    _check_model(model)
    r = np.asarray(r, dtype=float)
    R = np.asarray(R, dtype=float)
    h = 0.5 * gamma
    if model == "total_energy":
        lo = np.full(np.broadcast(r, R).shape, 2.0 ** -(h + 1.0))
        return lo, np.ones_like(lo)
    lo_R = np.minimum(R, 1.0 - R) ** h
    hi_R = np.maximum(R, 1.0 - R) ** h
    if model == "detached_kinetic_internal":
        return np.broadcast_to(lo_R, np.broadcast(r, R).shape), np.broadcast_to(hi_R, np.broadcast(r, R).shape)
    return lo_R * np.minimum(r, 1.0 - r) ** h, 2.0 ** (1.0 - h) * hi_R * np.ones_like(r)


def envelope_sum(v, v_star, I, I_star, gamma):
    rel = np.sqrt(_sq(np.asarray(v, dtype=float) - np.asarray(v_star, dtype=float)))
    return rel ** gamma + (np.asarray(I, dtype=float) + np.asarray(I_star, dtype=float)) ** (0.5 * gamma)


def measure_weight(r, R, I, I_star, alpha):
    """(r(1-r))^alpha (1-R)^{2 alpha + 1} R^{1/2} I^alpha I_*^alpha."""
    r = np.asarray(r, dtype=float)
    R = np.asarray(R, dtype=float)
    exponent = 2 * alpha if mutations.active("dropped_R_exponent") else 2 * alpha + 1
    return ((r * (1 - r)) ** alpha * (1 - R) ** exponent * np.sqrt(R)
            * np.asarray(I, dtype=float) ** alpha * np.asarray(I_star, dtype=float) ** alpha)


def base_measure(r, R, alpha):
    """(r, R) part of the collision measure, without the energy factors."""
    return measure_weight(r, R, 1.0, 1.0, alpha)


def c_alpha(alpha: float) -> float:
    """Total mass of the (r, R, sigma) measure: 4 pi B(a+1, a+1) B(3/2, 2a+2)."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    value = 4 * math.pi * special.beta(alpha + 1, alpha + 1) * special.beta(1.5, 2 * alpha + 2)
    if mutations.active("wrong_c_alpha"):
        return value / 4
    return float(value)


def c_alpha_quadrature(alpha: float) -> float:
    """Direct 2-D adaptive quadrature of the defining integral of c_alpha."""
    # substitute R = s^2 to remove the square-root endpoint singularity
    def inner(r):
        return integrate.quad(lambda s: 2 * s * base_measure(r, s * s, alpha),
                              0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)[0]

    outer = integrate.quad(inner, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)[0]
    return 4 * math.pi * outer


def sigma_integral_closed_form(c_bar_norm, R, E, gamma):
    """Closed form of the sphere integral of |v' + w|^{-(1-gamma)}.

    ``c_bar_norm`` is |(v + v_*)/2 + w| / sqrt(RE). At |c_bar| = 0 the
    continuous limit 4 pi (RE)^{-(1-gamma)/2} is returned.
    """
    c = np.asarray(c_bar_norm, dtype=float)
    RE = np.asarray(R, dtype=float) * np.asarray(E, dtype=float)
    if np.any(RE <= 0):
        raise ValueError("R E must be positive")
    if gamma == 1:
        # the integrand is identically 1
        return np.full(np.broadcast(c, RE).shape, 4 * np.pi)[()]
    g1 = 1.0 + gamma
    scale = RE ** (-(1.0 - gamma) / 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        general = 2 * np.pi / (g1 * c) * ((c + 1) ** g1 - np.abs(c - 1) ** g1)
    # near c = 0 the difference quotient loses digits; use its series
    small = 4 * np.pi * (1.0 + (g1 - 1) * (g1 - 2) * c * c / 6.0)
    value = np.where(c < 1e-6, small, general)
    return value * scale


def sigma_integral_bound(R, E, gamma):
    return 8 * np.pi / ((1 + gamma) * (np.asarray(R, dtype=float) * np.asarray(E, dtype=float)) ** ((1 - gamma) / 2))


def sigma_integral_quadrature(c_bar_norm: float, R: float, E: float, gamma: float) -> float:
    """Adaptive quadrature of the sphere integral in polar angle about c_bar.

    The azimuth integrates to 2 pi by symmetry; the polar integral is done
    numerically in t = cos(theta) with the endpoint singularity at c = 1 left
    to the adaptive rule.
    """
    c = float(c_bar_norm)
    k = 1.0 - gamma

    # t = -1 + 2 s^4 smooths the (near-)singular endpoint at t = -1, c = 1
    def integrand(s):
        s3 = s * s * s
        base = (1.0 - c) ** 2 + 4.0 * c * s3 * s
        if base <= 0.0:
            return 0.0
        return 8.0 * s3 * base ** (-k / 2)

    if k == 0:
        val = 2.0
    else:
        val = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=400)[0]
    return 2 * math.pi * val * (R * E) ** (-k / 2)


def sphere_rule(n_theta: int = 64, n_phi: int = 128):
    """Tensor rule on S^2: Gauss-Legendre in cos(theta), trapezoid in azimuth."""
    t, wt = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1 - t * t)
    pts = np.stack([np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)),
                    np.outer(t, np.ones_like(phi))], axis=-1).reshape(-1, 3)
    w = np.outer(wt, np.full(n_phi, 2 * np.pi / n_phi)).ravel()
    return pts, w


def sigma_integral_sphere(v, v_star, w, R, I, I_star, gamma, rule=None) -> float:
    """Direct sphere quadrature of |v' + w|^{-(1-gamma)} over sigma (no symmetry reduction)."""
    pts, wts = rule if rule is not None else sphere_rule()
    E = float(total_energy(v, v_star, I, I_star))
    v_prime = 0.5 * (np.asarray(v) + np.asarray(v_star)) + math.sqrt(R * E) * pts
    d = np.sqrt(_sq(v_prime + np.asarray(w)))
    return float(np.sum(wts * d ** (gamma - 1.0)))


def random_unit_vectors(rng: np.random.Generator, size) -> np.ndarray:
    z = rng.standard_normal(tuple(np.atleast_1d(size)) + (3,))
    return z / np.linalg.norm(z, axis=-1, keepdims=True)
