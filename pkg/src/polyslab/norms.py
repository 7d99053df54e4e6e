"""Weighted norms of slab distributions.

All norms act on F(v, I) = max over x of |f(x, v, I)| and carry the weight
phi(v, I) = exp(a(|v|^2/2 + I)):

    ||f||_0      = int phi F dv dI
    ||f||_k      = sup_w int phi |v - w|^{-k} F dv dI
    ||f||_P      = sup_P int_P int phi F dpi_P dI    (surface measure on planes P)
    |||f|||      = ||f||_0 + ||f||_{1-gamma} + ||f||_P

The suprema run over finite candidate sets, so the computed values are lower
bounds of the true suprema; the maximisers are reported.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import interp
from .phase_space import PhaseGrid, as_values, weight_phi


@dataclass(frozen=True)
class Plane:
    """The plane {v : normal . v = offset} (normal of unit length)."""

    normal: tuple
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if not math.isclose(float(np.linalg.norm(n)), 1.0, rel_tol=1e-9):
            raise ValueError("plane normal must be a unit vector")

    def as_dict(self) -> dict:
        return {"normal": [float(c) for c in self.normal], "offset": float(self.offset)}


@dataclass
class NormReport:
    norm0: float
    norm_singular: float
    norm_plane: float
    triple: float
    argmax_w: list | None
    argmax_plane: dict | None
    boundary_norm: float | None = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def sup_x(f) -> np.ndarray:
    """max over x of |f| on the (v, I) nodes; 4-D input is returned as |f|."""
    values = as_values(f)
    if values.ndim == 5:
        return np.max(np.abs(values), axis=0)
    return np.abs(values)


def _weighted(F, grid: PhaseGrid, a: float) -> np.ndarray:
    out = grid.weights * weight_phi(grid.velocities[..., None, :], grid.I, a) * F
    return out


def norm0(f, grid: PhaseGrid, a: float) -> float:
    total = float(np.sum(_weighted(sup_x(f), grid, a)))
    if not math.isfinite(total):
        raise FloatingPointError("weighted norm is not finite")
    return total


def default_w_candidates(f, grid: PhaseGrid, a: float) -> np.ndarray:
    """Velocity nodes, the origin and the phi-weighted mean velocity of F."""
    dens = _weighted(sup_x(f), grid, a).sum(axis=-1)
    nodes = grid.velocities.reshape(-1, 3)
    mass = dens.sum()
    mean = (dens.reshape(-1) @ nodes) / mass if mass > 0 else np.zeros(3)
    return np.vstack([nodes, np.zeros(3), mean])


_GL_S, _GL_W = np.polynomial.legendre.leggauss(24)


def _ball_average(d, rho, k):
    """Mean of |y - w|^{-k} over the ball |y - v| <= rho, d = |v - w|."""
    d = np.asarray(d, dtype=float)
    out = np.zeros_like(d)
    for lo_frac, hi in ((0.0, None), (None, 1.0)):
        # split the radial integral at s = min(d, rho)
        cut = np.minimum(d, rho)
        lo = np.zeros_like(d) if lo_frac == 0.0 else cut
        up = cut if hi is None else np.full_like(d, rho)
        half = 0.5 * (up - lo)
        s = lo[..., None] + half[..., None] * (_GL_S + 1.0)
        dd = d[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            mean = ((s + dd) ** (2 - k) - np.abs(s - dd) ** (2 - k)) / (2 * (2 - k) * s * dd)
            mean = np.where(dd > 0, mean, s ** -k)
        out += np.sum(_GL_W * s * s * np.where(np.isfinite(mean), mean, 0.0), axis=-1) * half
    return 3.0 * out / rho ** 3


def singular_kernel(v, w, k: float, grid: PhaseGrid) -> np.ndarray:
    """|v - w|^{-k} at nodes, replaced by a ball average (ball of the cell's
    volume centred at the node) within 1.5 cells of the singularity."""
    d = np.linalg.norm(v - w, axis=-1)
    h = max(grid.dv)
    rho = (3.0 * float(np.prod(grid.dv)) / (4.0 * math.pi)) ** (1.0 / 3.0)
    with np.errstate(divide="ignore"):
        K = d ** -k
    near = d < 1.5 * h
    if np.any(near):
        K[near] = _ball_average(d[near], rho, k)
    return K


def norm_k(f, grid: PhaseGrid, k: float, a: float, w_candidates=None) -> tuple:
    """(value, argmax_w) of sup_w int phi |v - w|^{-k} F dv dI."""
    if not 0.0 <= k < 3.0:
        raise ValueError("k must lie in [0, 3)")
    if k == 0.0:
        return norm0(f, grid, a), None
    if w_candidates is None:
        w_candidates = default_w_candidates(f, grid, a)
    w_candidates = np.atleast_2d(np.asarray(w_candidates, dtype=float))
    if w_candidates.shape[0] == 0:
        raise ValueError("w_candidates must be nonempty")
    Fv = _weighted(sup_x(f), grid, a).sum(axis=-1).reshape(-1)
    nodes = grid.velocities.reshape(-1, 3)
    support = Fv != 0
    if not support.any():
        return 0.0, [float(c) for c in w_candidates[0]]
    Fv, nodes = Fv[support], nodes[support]
    vals = np.array([Fv @ singular_kernel(nodes, w, k, grid) for w in w_candidates])
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("singular norm is not finite")
    i = int(np.argmax(vals))
    return float(vals[i]), [float(c) for c in w_candidates[i]]


def default_planes(f, grid: PhaseGrid, a: float, n_random: int = 64, seed: int = 0) -> list:
    """Axis planes through every grid coordinate and through the weighted mean,
    plus ``n_random`` seeded random planes through the mean."""
    dens = _weighted(sup_x(f), grid, a).sum(axis=-1)
    mass = dens.sum()
    mean = (dens.reshape(-1) @ grid.velocities.reshape(-1, 3)) / mass if mass > 0 else np.zeros(3)
    planes = []
    for ax in range(3):
        e = tuple(float(i == ax) for i in range(3))
        planes += [Plane(e, float(c)) for c in grid.v_axes[ax]]
        planes.append(Plane(e, float(mean[ax])))
    gen = np.random.default_rng(seed)
    for _ in range(n_random):
        n = gen.standard_normal(3)
        n /= np.linalg.norm(n)
        planes.append(Plane(tuple(float(c) for c in n), float(n @ mean)))
    return planes


def _plane_basis(normal):
    n = np.asarray(normal, dtype=float)
    helper = np.eye(3)[int(np.argmin(np.abs(n)))]
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    return n, e1, np.cross(n, e1)


def _axis_plane_index(plane: Plane, grid: PhaseGrid):
    n = np.asarray(plane.normal)
    ax = int(np.argmax(np.abs(n)))
    if abs(abs(n[ax]) - 1.0) > 1e-14:
        return None
    c = plane.offset * n[ax]
    hit = np.nonzero(np.abs(grid.v_axes[ax] - c) <= 1e-12 * max(1.0, abs(c)))[0]
    return (ax, int(hit[0])) if hit.size else None


class _PlaneIntegrator:
    def __init__(self, F, grid: PhaseGrid, a: float, alpha: float, resolution: float = 2.0):
        self.grid = grid
        self.a = a
        self.F = F
        self.phiF = _weighted(F, grid, a) / grid.weights
        self.interp = interp.Interpolant(grid, F, alpha)
        self.h = min(grid.dv) / resolution
        self.radius = float(np.linalg.norm(grid.v_max))
        m = int(math.ceil(self.radius / self.h))
        self.st = (np.arange(-m, m) + 0.5) * self.h

    def __call__(self, plane: Plane) -> float:
        if abs(plane.offset) > self.radius:
            warnings.warn(f"plane {plane.as_dict()} misses the velocity box; it contributes 0")
            return 0.0
        hit = _axis_plane_index(plane, self.grid)
        if hit is not None:
            ax, i = hit
            sl = np.take(self.phiF, i, axis=ax)
            others = [d for j, d in enumerate(self.grid.dv) if j != ax]
            return float(np.sum(sl * self.grid.I_weights) * others[0] * others[1])
        n, e1, e2 = _plane_basis(plane.normal)
        S, T = np.meshgrid(self.st, self.st, indexing="ij")
        pts = plane.offset * n + S[..., None] * e1 + T[..., None] * e2
        inside = np.all(np.abs(pts) <= np.asarray(self.grid.v_max), axis=-1)
        pts = pts[inside]
        if pts.shape[0] == 0:
            return 0.0
        total = 0.0
        for j, (I, wI) in enumerate(zip(self.grid.I, self.grid.I_weights)):
            vals = self.interp(pts, np.full(pts.shape[0], I))
            total += wI * float(np.sum(vals * weight_phi(pts, I, self.a)))
        return total * self.h * self.h


def norm_plane(f, grid: PhaseGrid, a: float, planes=None, alpha: float = 0.0) -> tuple:
    """(value, argmax_plane) of the sup over ``planes`` of the phi-weighted plane integral.

    ``alpha`` is the internal-energy exponent used by the off-node interpolant.
    """
    F = sup_x(f)
    if planes is None:
        planes = default_planes(F, grid, a)
    if len(planes) == 0:
        raise ValueError("plane family must be nonempty")
    if not np.any(F):
        return 0.0, planes[0].as_dict()
    integ = _PlaneIntegrator(F, grid, a, alpha)
    vals = np.array([integ(p) for p in planes])
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("plane norm is not finite")
    i = int(np.argmax(vals))
    return float(vals[i]), planes[i].as_dict()


def norm_plane_mollified(f, grid: PhaseGrid, a: float, plane: Plane, alpha_mollifier: float,
                         alpha: float = 0.0, order: int = 24) -> float:
    """int phi (alpha_m/pi)^{1/2} exp(-alpha_m d(v)^2) F dv dI, d the signed distance to ``plane``.

    The distance direction is integrated by Gauss-Hermite, each slice by the
    plane rule of ``norm_plane``.
    """
    if alpha_mollifier <= 0:
        raise ValueError("alpha_mollifier must be positive")
    F = sup_x(f)
    if not np.any(F):
        return 0.0
    integ = _PlaneIntegrator(F, grid, a, alpha)
    x, w = np.polynomial.hermite.hermgauss(order)
    shifts = x / math.sqrt(alpha_mollifier)
    n = np.asarray(plane.normal, dtype=float)
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for s, wk in zip(shifts, w):
            # shifted planes are never axis-node planes unless s == 0
            total += wk * integ(Plane(tuple(n), plane.offset + float(s)))
    return total / math.sqrt(math.pi)


def boundary_norm(f_LR, grid: PhaseGrid, gamma: float, a: float) -> float:
    """|| |v1|^{-1} (1 + (|v|^2 + I)^{gamma/2}) f_LR ||_0 on the grid."""
    F = sup_x(f_LR)
    v = grid.velocities[..., None, :]
    extra = (1.0 + (np.sum(v * v, axis=-1) + grid.I) ** (0.5 * gamma)) / np.abs(v[..., 0])
    return norm0(F * extra, grid, a)


def boundary_refinement(make_values, grid: PhaseGrid, gamma: float, a: float, levels: int = 3,
                        factor: int = 2) -> dict:
    """Boundary norm under repeated refinement of the v1 axis.

    ``make_values(grid)`` realises the boundary data on a grid. Convergent data
    show shrinking increments; a 1/|v1| divergence shows increments that do not
    shrink (about ln(factor) times the density at v1 = 0 per level).
    """
    if levels < 3:
        raise ValueError("at least 3 refinement levels are needed")
    values, g = [], grid
    for _ in range(levels):
        values.append(boundary_norm(make_values(g), g, gamma, a))
        g = g.refined(factor, axes=(0,))
    inc = np.diff(values)
    scale = max(abs(values[-1]), 1e-300)
    ratio = float(abs(inc[-1]) / abs(inc[-2])) if inc[-2] != 0 else 0.0
    divergent = bool(ratio > 0.5 and abs(inc[-1]) > 1e-3 * scale)
    return {"values": [float(v) for v in values], "increments": [float(d) for d in inc],
            "increment_ratio": ratio, "divergent": divergent}


def norm_report(f, grid: PhaseGrid, gamma: float, a: float, alpha: float = 0.0,
                w_candidates=None, planes=None) -> NormReport:
    n0 = norm0(f, grid, a)
    ns, w = norm_k(f, grid, 1.0 - gamma, a, w_candidates)
    npl, plane = norm_plane(f, grid, a, planes, alpha)
    return NormReport(n0, ns, npl, n0 + ns + npl, w, plane)


def triple(f, grid: PhaseGrid, gamma: float, a: float, alpha: float = 0.0, **kw) -> float:
    return norm_report(f, grid, gamma, a, alpha, **kw).triple
