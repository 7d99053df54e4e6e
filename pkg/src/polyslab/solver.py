"""Mild-form solution map, Picard iteration and their diagnostics.

For v1 > 0 the solution map reads

    Psi(f)(x) = exp(-lam int_0^x L) f_L + lam int_0^x exp(-lam int_y^x L) Q+(f, f)(y) dy,

lam = epsilon/|v1|, and symmetrically from x = 1 for v1 < 0. Along each
(v, I) column the attenuation exponent is the cumulative trapezoid integral of
L, and the source integral is done cell by cell with L and Q+/L linear in
the cell (an exponential integrator). This makes Psi(M) = M exact for an
equilibrium M whose gain and loss come from shared samples.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import collision, kernel, mutations, norms
from .collision import Proposal, QuadratureSpec
from .phase_space import CollisionParams, DistributionField, PhaseGrid, maxwellian, weight_phi

BOUNDARY_FAMILIES = ("cutoff_maxwellian", "half_maxwellian", "custom_table")


class BoundaryError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SideParams:
    """Boundary Maxwellian n |v1|^beta M(T, u, alpha) on one side."""

    n: float = 1.0
    T: float = 1.0
    u: tuple = (0.0, 0.0, 0.0)
    beta: float = 1.0

    def as_dict(self) -> dict:
        return {"n": self.n, "T": self.T, "u": list(self.u), "beta": self.beta}


@dataclass
class BoundaryData:
    family: str
    left: SideParams | None
    right: SideParams | None
    grid: PhaseGrid
    f_L: np.ndarray
    f_R: np.ndarray
    alpha: float
    warnings: list = field(default_factory=list)

    @property
    def f_LR(self) -> np.ndarray:
        return self.f_L + self.f_R

    def realize(self, grid: PhaseGrid) -> np.ndarray:
        """f_LR on another grid (same family and parameters)."""
        if self.family == "custom_table":
            raise BoundaryError("custom tables cannot be re-realised on another grid")
        return _side_values(grid, self.left, self.alpha, +1) + _side_values(grid, self.right, self.alpha, -1)

    def admissibility(self, gamma: float, a: float, levels: int = 3) -> dict:
        return norms.boundary_refinement(self.realize, self.grid, gamma, a, levels)

    def summary_key(self) -> dict:
        """Identifying parameters (table digests for custom data)."""
        if self.family == "custom_table":
            import hashlib

            h = hashlib.sha256(np.ascontiguousarray(self.f_LR).tobytes()).hexdigest()[:16]
            return {"family": self.family, "table_sha256": h}
        return {"family": self.family, "left": self.left.as_dict(), "right": self.right.as_dict()}

    def summary(self, gamma: float, a: float) -> dict:
        rep = norms.norm_report(self.f_LR, self.grid, gamma, a, self.alpha)
        return {"family": self.family,
                "left": self.left.as_dict() if self.left else None,
                "right": self.right.as_dict() if self.right else None,
                "norm0": rep.norm0, "triple": rep.triple,
                "boundary_norm": norms.boundary_norm(self.f_LR, self.grid, gamma, a),
                "warnings": list(self.warnings)}


def _side_values(grid: PhaseGrid, side: SideParams | None, alpha: float, sign: int) -> np.ndarray:
    out = np.zeros(grid.node_shape)
    if side is None or side.n == 0:
        return out
    v = grid.velocities[..., None, :]
    v1 = v[..., 0]
    M = maxwellian(v, grid.I, n=1.0, T=side.T, u=side.u, alpha=alpha)
    vals = side.n * np.abs(v1) ** side.beta * M
    return np.where(sign * v1 > 0, vals, 0.0)


def make_boundary(family: str, params: dict, grid: PhaseGrid, collision_params: CollisionParams) -> BoundaryData:
    """Inflow data f_L (on v1 > 0) and f_R (on v1 < 0).

    ``params`` maps "left"/"right" to dicts with keys n, T, u, beta (Maxwellian
    families) or to node arrays (custom_table).
    """
    if family not in BOUNDARY_FAMILIES:
        raise BoundaryError(f"unknown boundary family {family!r}; expected one of {BOUNDARY_FAMILIES}")
    a, alpha = collision_params.weight_a, collision_params.alpha
    notes = []
    if family == "custom_table":
        v1 = grid.velocities[..., None, 0]
        f_L = np.where(v1 > 0, np.asarray(params["left"], dtype=float), 0.0)
        f_R = np.where(v1 < 0, np.asarray(params["right"], dtype=float), 0.0)
        if np.any(f_L < 0) or np.any(f_R < 0) or not np.all(np.isfinite(f_L + f_R)):
            raise BoundaryError("boundary table must be finite and non-negative")
        return BoundaryData(family, None, None, grid, f_L, f_R, alpha, notes)
    sides = []
    for name in ("left", "right"):
        raw = dict(params.get(name, {}))
        if family == "half_maxwellian":
            if raw.get("beta", 0.0) != 0.0:
                raise BoundaryError("half_maxwellian has beta = 0; use cutoff_maxwellian for beta > 0")
            raw["beta"] = 0.0
        side = SideParams(float(raw.get("n", 1.0)), float(raw.get("T", 1.0)),
                          tuple(float(c) for c in raw.get("u", (0.0, 0.0, 0.0))),
                          float(raw.get("beta", 1.0)))
        if side.n < 0:
            raise BoundaryError(f"{name}: density must be non-negative")
        if side.T <= 0:
            raise BoundaryError(f"{name}: temperature must be positive")
        if side.beta < 0:
            raise BoundaryError(f"{name}: beta must be non-negative")
        if side.n > 0 and a * side.T >= 1:
            raise BoundaryError(f"{name}: weight admissibility a*T < 1 violated (a={a}, T={side.T})")
        if side.n > 0 and side.beta < 1:
            notes.append(f"{name}: beta={side.beta} < 1, the boundary data need not satisfy "
                         "the admissibility condition on |v1|^-1 (1+(|v|^2+I)^(gamma/2)) f_LR")
        sides.append(side)
    for note in notes:
        warnings.warn(note)
    f_L = _side_values(grid, sides[0], alpha, +1)
    f_R = _side_values(grid, sides[1], alpha, -1)
    return BoundaryData(family, sides[0], sides[1], grid, f_L, f_R, alpha, notes)


def default_boundary(grid: PhaseGrid, params: CollisionParams) -> BoundaryData:
    """Evaporation-condensation data: cutoff Maxwellians, T_L = 1, T_R = 0.5."""
    spec = {"left": {"n": 0.1, "T": 1.0, "beta": 1.0}, "right": {"n": 0.1, "T": 0.5, "beta": 1.0}}
    return make_boundary("cutoff_maxwellian", spec, grid, params)


def _decay(h):
    return np.exp(h) if mutations.active("attenuation_sign") else np.exp(-h)


def _trapezoid_partial(x, L, x_from, x_to):
    """Trapezoid integral of the nodal profile L(x) over [x_from, x_to]."""
    xs = np.concatenate([[x_from], x[(x > x_from) & (x < x_to)], [x_to]])
    vals = np.interp(xs, x, L)
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(xs)))


def attenuation(f: DistributionField, x_from: float, x_to: float, v, I, params: CollisionParams,
                quad: QuadratureSpec | None = None) -> float:
    """exp(-(epsilon/|v1|) int_{x_from}^{x_to} L(f)(z, v, I) dz) with trapezoid quadrature."""
    if x_from > x_to:
        raise ValueError("x_from must not exceed x_to")
    v = np.asarray(v, dtype=float)
    if v[0] == 0:
        raise ValueError("attenuation is undefined at v1 = 0")
    if x_from == x_to:
        return 1.0
    L = np.array([float(collision.loss_frequency(f, j, v, I, params, quad).value)
                  for j in range(f.grid.n_x)])
    integral = _trapezoid_partial(f.grid.x, L, x_from, x_to)
    return float(_decay(params.epsilon / abs(v[0]) * integral))


def _phi2(h):
    """(h - 1 + e^{-h}) / h, i.e. int_0^1 theta h e^{-(1-theta)h} dtheta / h * h."""
    small = h < 1e-5
    hs = np.where(small, 1.0, h)
    big = (hs + np.expm1(-hs)) / hs
    return np.where(small, h / 2 - h * h / 6, big)


def _sweep(gain, loss, inflow, lam, x, forward: bool):
    """Nodewise x-sweep of one half space; arrays are (n_x, n_cols)."""
    nx = x.size
    out = np.empty_like(gain)
    order = range(nx - 1) if forward else range(nx - 1, 0, -1)
    start = 0 if forward else nx - 1
    out[start] = inflow
    for j in order:
        k = j + 1 if forward else j - 1
        dx = abs(x[k] - x[j])
        h = lam * dx * 0.5 * (loss[j] + loss[k])
        e = _decay(h)
        pos = (loss[j] > 0) & (loss[k] > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            rho_j = np.where(pos, gain[j] / np.where(pos, loss[j], 1.0), 0.0)
            rho_k = np.where(pos, gain[k] / np.where(pos, loss[k], 1.0), 0.0)
            one_minus = -np.expm1(-h)
            p2 = _phi2(h)
            expo = rho_j * (one_minus - p2) + rho_k * p2
        trap = 0.5 * lam * dx * (e * gain[j] + gain[k])
        out[k] = e * out[j] + np.where(pos, expo, trap)
    return out


@dataclass
class PsiResult:
    field: DistributionField
    gain: np.ndarray
    loss: np.ndarray
    clamped: int


def frozen_samples(grid: PhaseGrid, params: CollisionParams, quad: QuadratureSpec,
                   proposal: Proposal, label="psi"):
    """The sample set reused by every application of Psi in one solve."""
    if quad.mode == "tensor":
        return list(collision.tensor_samples(quad, params.alpha, proposal))
    n = int(np.prod(grid.node_shape))
    return collision.draw_samples(quad, params.alpha, n, proposal, label)


def boundary_proposal(bc: BoundaryData, quad: QuadratureSpec) -> Proposal:
    return quad.proposal or Proposal.from_values(bc.grid, bc.f_LR)


def apply_psi_detailed(f: DistributionField, bc: BoundaryData, params: CollisionParams,
                       quad: QuadratureSpec, samples=None) -> PsiResult:
    grid = f.grid
    if bc.grid is not grid and bc.grid.shape != grid.shape:
        raise ValueError("boundary data and field live on different grids")
    if samples is None:
        samples = frozen_samples(grid, params, quad, boundary_proposal(bc, quad))
    tv, tI = collision.grid_targets(grid)
    nx = grid.n_x
    flat = f.values.reshape(nx, -1)
    if np.any(flat):
        terms = collision.collision_terms(f.values, grid, params, samples, tv, tI, flat)
        gain, loss = terms.gain, terms.loss
    else:
        gain = np.zeros_like(flat)
        loss = np.zeros_like(flat)
    v1 = tv[:, 0]
    lam = params.epsilon / np.abs(v1)
    out = np.empty_like(flat)
    pos = v1 > 0
    neg = ~pos
    out[:, pos] = _sweep(gain[:, pos], loss[:, pos], bc.f_L.reshape(-1)[pos], lam[pos], grid.x, True)
    out[:, neg] = _sweep(gain[:, neg], loss[:, neg], bc.f_R.reshape(-1)[neg], lam[neg], grid.x, False)
    bad = ~np.isfinite(out)
    if np.any(bad):
        raise FloatingPointError(f"Psi produced {int(bad.sum())} non-finite values")
    negative = out < 0
    clamped = int(negative.sum())
    if clamped:
        out[negative] = 0.0
    return PsiResult(DistributionField(grid, out.reshape(grid.shape), check=False), gain, loss, clamped)


def apply_psi(f: DistributionField, bc: BoundaryData, params: CollisionParams, quad: QuadratureSpec,
              samples=None) -> DistributionField:
    """One application of the solution map."""
    return apply_psi_detailed(f, bc, params, quad, samples).field


@dataclass
class IterationReport:
    residuals: list
    ratios: list
    iterations: int
    converged: bool
    diverged: bool
    tol: float
    epsilon: float
    halvings: int = 0
    clamped: int = 0
    wall_time: float = 0.0
    fitted_rate: float | None = None
    fresh_seed_residual: float | None = None
    final_norms: dict | None = None
    invariance: dict | None = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def fitted_rate(residuals, floor: float = 0.0) -> float | None:
    """Geometric rate from a least-squares fit of log residuals, skipping the
    first step and anything at or below ``floor``."""
    r = np.asarray(residuals, dtype=float)
    idx = np.nonzero(r > max(floor, 1e-300))[0]
    idx = idx[idx >= 1]
    if idx.size < 2:
        return None
    slope = np.polyfit(idx, np.log(r[idx]), 1)[0]
    return float(math.exp(slope))


def picard_solve(f0: DistributionField, bc: BoundaryData, params: CollisionParams, quad: QuadratureSpec,
                 tol: float | None = None, max_iter: int = 100, auto_halve: bool = False,
                 max_halvings: int = 6, revalidate: bool = True):
    """Fixed point of Psi by Picard iteration with a frozen sample set.

    Returns (field, IterationReport). Without ``auto_halve`` a divergence (five
    consecutive residual increases) raises DivergenceError; with it epsilon is
    halved and the solve restarted, up to ``max_halvings`` times.
    """
    if np.any(f0.values < 0):
        raise ValueError("initial guess must be non-negative")
    grid, a = f0.grid, params.weight_a
    if tol is None:
        tol = 1e-6 * max(norms.norm0(bc.f_LR, grid, a), 1e-300)
    if tol <= 0:
        raise ValueError("tol must be positive")
    samples = frozen_samples(grid, params, quad, boundary_proposal(bc, quad))
    halvings = 0
    start = time.perf_counter()
    while True:
        f = f0
        residuals, clamps, diverged = [], 0, False
        for _ in range(max_iter):
            res = apply_psi_detailed(f, bc, params, quad, samples)
            clamps += res.clamped
            r = norms.norm0(res.field.values - f.values, grid, a)
            residuals.append(r)
            f = res.field
            if r <= tol:
                break
            if len(residuals) > 5 and all(residuals[-i] > residuals[-i - 1] for i in range(1, 6)):
                diverged = True
                break
        ratios = [residuals[i + 1] / residuals[i] for i in range(len(residuals) - 1) if residuals[i] > 0]
        report = IterationReport(residuals, ratios, len(residuals), residuals[-1] <= tol, diverged,
                                 tol, params.epsilon, halvings, clamps,
                                 fitted_rate=fitted_rate(residuals, floor=tol * 1e-3))
        if not diverged:
            break
        if not auto_halve or halvings >= max_halvings:
            report.wall_time = time.perf_counter() - start
            raise DivergenceError(f"Picard iteration diverged at epsilon={params.epsilon}; "
                                  "reduce epsilon (or enable auto_halve)", report)
        halvings += 1
        params = params.replace(epsilon=params.epsilon / 2)
    if revalidate and quad.mode == "monte_carlo":
        fresh = quad.replace(seed=quad.seed + 1)
        g = apply_psi(f, bc, params, fresh, frozen_samples(grid, params, fresh, boundary_proposal(bc, fresh)))
        report.fresh_seed_residual = norms.norm0(g.values - f.values, grid, a)
    report.wall_time = time.perf_counter() - start
    return f, report


def measure_contraction(f: DistributionField, g: DistributionField, bc: BoundaryData,
                        params: CollisionParams, eps_list, quad: QuadratureSpec, n_seeds: int = 4) -> list:
    """Ratios ||Psi(f) - Psi(g)||_0 / ||f - g||_0 for each epsilon.

    Each ratio is averaged over ``n_seeds`` sample sets (both fields always
    share the set); the spread gives the standard error.
    """
    grid, a = f.grid, params.weight_a
    denom = norms.norm0(f.values - g.values, grid, a)
    if denom == 0:
        raise ValueError("f and g coincide; the contraction ratio is undefined")
    proposal = boundary_proposal(bc, quad)
    sets = [frozen_samples(grid, params, quad.replace(seed=quad.seed + s), proposal, label="contraction")
            for s in range(n_seeds)]
    rows = []
    for eps in eps_list:
        p = params.replace(epsilon=float(eps))
        vals = []
        for samples in sets:
            pf = apply_psi(f, bc, p, quad, samples)
            pg = apply_psi(g, bc, p, quad, samples)
            vals.append(norms.norm0(pf.values - pg.values, grid, a) / denom)
        vals = np.array(vals)
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        rows.append({"epsilon": float(eps), "ratio": float(vals.mean()), "std_error": se,
                     "per_seed": [float(v) for v in vals]})
    return rows


def standard_pair(bc: BoundaryData, params: CollisionParams, quad: QuadratureSpec, iterations: int = 4):
    """The standard contraction test pair and the Picard run that produced it.

    Picard iteration from zero is run for ``iterations`` steps at
    ``params.epsilon`` (without stopping early); the pair is the last two
    iterates, whose difference lies along the slowest-contracting direction.
    """
    if iterations < 3:
        raise ValueError("at least three iterations are needed")
    grid = bc.grid
    samples = frozen_samples(grid, params, quad, boundary_proposal(bc, quad))
    fields = [grid.zeros()]
    residuals = []
    for _ in range(iterations):
        fields.append(apply_psi(fields[-1], bc, params, quad, samples))
        residuals.append(norms.norm0(fields[-1].values - fields[-2].values, grid, params.weight_a))
        fields = fields[-2:]
    f, g = fields
    if norms.norm0(f.values - g.values, grid, params.weight_a) == 0:
        raise ValueError("Picard iterates coincide; the standard pair is degenerate")
    ratios = [residuals[i + 1] / residuals[i] for i in range(len(residuals) - 1) if residuals[i] > 0]
    report = IterationReport(residuals, ratios, iterations, False, False, 0.0, params.epsilon,
                             fitted_rate=fitted_rate(residuals))
    return f, g, report


# ---------------------------------------------------------------------------
# invariance constants


def _c_integrand_log(v, I, params: CollisionParams, a1: float):
    a, gam = params.weight_a, params.gamma
    speed2 = np.sum(v * v, axis=-1)
    with np.errstate(divide="ignore"):
        return -4 * math.pi * math.exp(a) / a * (1 + (speed2 + I) ** (0.5 * gam)) * a1 / np.abs(v[..., 0])


def _log_region_grid(side_values, grid: PhaseGrid, params: CollisionParams, a1: float, lo, hi) -> float:
    """log of the grid sum of exp(-4 pi (e^a/a)(1 + (|v|^2+I)^{gamma/2}) a1/|v1|) f over lo <= |v| <= hi."""
    v = grid.velocities[..., None, :]
    speed = np.sqrt(np.sum(v * v, axis=-1))
    mask = np.broadcast_to((speed >= lo) & (speed <= hi), side_values.shape) & (side_values > 0)
    if not mask.any():
        return -math.inf
    with np.errstate(divide="ignore"):
        logs = (_c_integrand_log(v, grid.I, params, a1)
                + np.log(np.where(mask, side_values * grid.weights, 1.0)))[mask]
    return float(special.logsumexp(logs))


def _log_region_exact(side: SideParams, sign: int, params: CollisionParams, a1: float, lo, hi,
                      order: int = 48) -> float:
    """The same integral for a Maxwellian side, by a product Gauss rule in
    spherical coordinates about the v1 axis (independent of the phase grid)."""
    if side is None or side.n == 0:
        return -math.inf
    alpha = params.alpha
    if hi == math.inf:
        hi = lo + float(np.linalg.norm(side.u)) + 14.0 * math.sqrt(side.T)
    xr, wr = np.polynomial.legendre.leggauss(order)
    rad = lo + 0.5 * (hi - lo) * (xr + 1)
    wr = 0.5 * (hi - lo) * wr * rad**2
    # cos(theta) on the inflow half (v1 has the sign of the side)
    xc, wc = np.polynomial.legendre.leggauss(order)
    mu = 0.5 * (xc + 1)
    wc = 0.5 * wc
    n_phi = 2 * order
    phi = 2 * math.pi * (np.arange(n_phi) + 0.5) / n_phi
    wphi = np.full(n_phi, 2 * math.pi / n_phi)
    xi, wi = special.roots_genlaguerre(order, alpha)
    I = side.T * xi
    # generalised Laguerre absorbs I^alpha e^{-I/T}; the rest of f stays explicit
    wI = wi * side.T ** (alpha + 1)
    Rr, Mu, Ph, Iq = np.meshgrid(rad, mu, phi, I, indexing="ij")
    W = np.einsum("a,b,c,d->abcd", wr, wc, wphi, wI)
    s = np.sqrt(1 - Mu**2)
    v = np.stack([sign * Rr * Mu, Rr * s * np.cos(Ph), Rr * s * np.sin(Ph)], axis=-1)
    du = v - np.asarray(side.u)
    log_f = (math.log(side.n) + side.beta * np.log(np.abs(v[..., 0]))
             - 1.5 * math.log(2 * math.pi * side.T) - np.sum(du * du, axis=-1) / (2 * side.T)
             - special.gammaln(alpha + 1) - (alpha + 1) * math.log(side.T))
    logs = _c_integrand_log(v, Iq, params, a1) + log_f + np.log(W)
    return float(special.logsumexp(logs))


def _log_region(bc: BoundaryData, params: CollisionParams, a1: float, lo, hi) -> float:
    """min over the two inflow sides of the log of C1 (lo, hi = 0, 1) or C2 (4, inf)."""
    if bc.family == "custom_table":
        return min(_log_region_grid(bc.f_L, bc.grid, params, a1, lo, hi),
                   _log_region_grid(bc.f_R, bc.grid, params, a1, lo, hi))
    return min(_log_region_exact(bc.left, +1, params, a1, lo, hi),
               _log_region_exact(bc.right, -1, params, a1, lo, hi))


def _logsumexp(*terms):
    top = max(terms)
    if top == -math.inf:
        return -math.inf
    return top + math.log(sum(math.exp(t - top) for t in terms))


def _safe_exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def invariance_constants(bc: BoundaryData, params: CollisionParams) -> dict:
    """a1..a4, C1, C2 of the solution space (logarithms kept alongside, since
    C1, C2 and a2 routinely underflow double precision).

    C1 and C2 are evaluated for f_L on v1 > 0 and for f_R on v1 < 0 separately;
    the smaller value of each enters a2 so that the bound covers both half spaces.
    Maxwellian families use a dedicated spherical rule, tables use the grid.
    """
    g, a = params.gamma, params.weight_a
    rep = norms.norm_report(bc.f_LR, bc.grid, g, a, params.alpha)
    a1 = 2.0 * rep.triple
    logC1 = _log_region(bc, params, a1, 0.0, 1.0)
    logC2 = _log_region(bc, params, a1, 4.0, math.inf)
    log_ca = math.log(kernel.c_alpha(params.alpha))
    log_a2 = log_ca + min(logC1 - g * math.log(4.0), logC2)
    degenerate = log_a2 == -math.inf
    out = {"a1": a1, "boundary_triple": rep.triple, "boundary_norms": rep.as_dict(),
           "log_C1": logC1, "log_C2": logC2, "log_a2": log_a2, "degenerate": degenerate}
    if degenerate:
        out.update({"a2": 0.0, "a3": math.inf, "a4": math.inf, "log_a3": math.inf, "log_a4": math.inf})
        return out
    k3 = 16 * math.pi / (1 + g) ** 2 * max(1 / a, 1.0)
    log_a3 = _logsumexp(math.log(a1 / 2), math.log(k3) + 2 * math.log(a1) - log_a2)
    k4 = max(math.pi, 2 ** (2 - g))
    log_a4 = _logsumexp(math.log(a1 / 2), math.log(k4) - log_a2 + _logsumexp(2 * math.log(a1),
                                                                             math.log(a1) + log_a3))
    out.update({"C1": _safe_exp(logC1), "C2": _safe_exp(logC2), "a2": _safe_exp(log_a2),
                "log_a3": log_a3, "log_a4": log_a4, "a3": _safe_exp(log_a3), "a4": _safe_exp(log_a4)})
    return out


def _margin(log_rhs, lhs):
    """rhs - lhs for rhs = exp(log_rhs), with an exact sign even when rhs overflows."""
    rhs = _safe_exp(log_rhs)
    if math.isinf(rhs):
        return math.inf
    return rhs - lhs


def check_invariance(f: DistributionField, bc: BoundaryData, params: CollisionParams,
                     quad: QuadratureSpec, psi_f: DistributionField | None = None) -> dict:
    """Membership margins of f and Psi(f) in the solution space, and the
    pointwise bound L(Psi(f)) >= a2 (1 + (|v|^2 + I)^{gamma/2})."""
    grid, g, a = f.grid, params.gamma, params.weight_a
    consts = invariance_constants(bc, params)
    if consts["degenerate"]:
        return {"constants": consts, "degenerate": True,
                "message": "boundary data carry no mass in |v| <= 1 or |v| >= 4 (C1 or C2 is zero)"}
    if psi_f is None:
        psi_f = apply_psi(f, bc, params, quad)
    out = {"constants": consts, "degenerate": False}
    log_a1 = math.log(consts["a1"])
    for name, field_ in (("f", f), ("psi_f", psi_f)):
        rep = norms.norm_report(field_.values, grid, g, a, params.alpha)
        out[name] = {
            "norm0": rep.norm0, "norm_singular": rep.norm_singular, "norm_plane": rep.norm_plane,
            "margin_a1": _margin(log_a1, rep.norm0),
            "margin_a3": _margin(consts["log_a3"], rep.norm_singular),
            "margin_a4": _margin(consts["log_a4"], rep.norm_plane),
            "log_ratio_a3": consts["log_a3"] - math.log(max(rep.norm_singular, 1e-300)),
            "log_ratio_a4": consts["log_a4"] - math.log(max(rep.norm_plane, 1e-300)),
        }
    if params.kernel_model == "total_energy":
        tv, tI = collision.grid_targets(grid)
        L = kernel.c_alpha(params.alpha) * collision.loss_reduced(psi_f.values, grid, g, tv, tI)
        floor = 1 + (np.sum(tv * tv, axis=-1) + tI) ** (0.5 * g)
        with np.errstate(divide="ignore"):
            log_gap = np.log(np.maximum(L, 1e-320)) - (consts["log_a2"] + np.log(floor))
        out["L_lower"] = {"min_L": float(L.min()), "min_log_ratio": float(log_gap.min()),
                          "margin": float(np.min(L - consts["a2"] * floor))}
    return out


def moments(f: DistributionField, alpha: float = 0.0) -> dict:
    """Per-x density, bulk velocity, translational and internal temperature and
    the x-flux; None where the density vanishes."""
    grid = f.grid
    w = grid.weights
    v = grid.velocities[..., None, :]
    rows = []
    for j in range(grid.n_x):
        fw = f.values[j] * w
        n = float(fw.sum())
        if n <= 0:
            rows.append({"x": float(grid.x[j]), "n": None, "u": None, "T_tr": None, "T_int": None,
                         "flux": None})
            continue
        u = np.array([float(np.sum(fw * v[..., i])) for i in range(3)]) / n
        c = v - u
        T_tr = float(np.sum(fw * np.sum(c * c, axis=-1))) / (3 * n)
        T_int = float(np.sum(fw * grid.I)) / ((alpha + 1) * n)
        flux = float(np.sum(fw * v[..., 0]))
        rows.append({"x": float(grid.x[j]), "n": n, "u": [float(c_) for c_ in u], "T_tr": T_tr,
                     "T_int": T_int, "flux": flux})
    return {"x": [float(x) for x in grid.x], "profiles": rows}


def mild_residual(f: DistributionField, bc: BoundaryData, params: CollisionParams,
                  quad: QuadratureSpec, samples=None) -> float:
    """max over nodes of |Psi(f) - f| / (1 + ||f||_0)."""
    g = apply_psi(f, bc, params, quad, samples)
    return float(np.max(np.abs(g.values - f.values)) / (1 + norms.norm0(f, f.grid, params.weight_a)))


def weighted_mass(f: DistributionField, a: float) -> float:
    return float(np.max(np.tensordot(f.values, f.grid.weights * weight_phi(
        f.grid.velocities[..., None, :], f.grid.I, a), axes=4)))
