"""Gain term, collision frequency and the full collision operator.

Integrals over the collision domain (v_*, I_*, r, R, sigma) are estimated by
importance sampling: v_* is Gaussian, I_* exponential, and (r, R, sigma) are
drawn from the normalised base measure so that their weight is the constant
c_alpha. Gain and loss share every sample, so for an equilibrium field the
estimated Q = Q+ - f L vanishes sample by sample. A tensor-product rule over
the same integrand serves as a deterministic cross-check on small grids.

Stored fields enter through the interpolant of ``interp``; the factor
(I I_*)^alpha of the measure cancels against 1/(I I_*)^alpha in L and against
1/(I' I'_*)^alpha in Q+ symbolically, by working with g = f / I^alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from numba import njit, prange
from scipy import special

from . import interp, kernel, mutations, rng
from .phase_space import KERNEL_MODELS, CollisionParams, DistributionField, PhaseGrid, as_values

QUAD_MODES = ("monte_carlo", "tensor")


@dataclass(frozen=True)
class Proposal:
    """Sampling law for (v_*, I_*): isotropic Gaussian and exponential."""

    mean: tuple = (0.0, 0.0, 0.0)
    scale: float = 1.0
    I_rate: float = 1.0

    def __post_init__(self):
        if not (self.scale > 0 and self.I_rate > 0):
            raise ValueError("proposal scale and I_rate must be positive")

    def draw(self, gen: np.random.Generator, shape) -> tuple:
        shape = tuple(np.atleast_1d(shape))
        v = np.asarray(self.mean) + self.scale * gen.standard_normal(shape + (3,))
        I = gen.exponential(1.0 / self.I_rate, size=shape)
        return v, I

    def log_density(self, v, I) -> np.ndarray:
        d = np.asarray(v) - np.asarray(self.mean)
        s2 = self.scale ** 2
        return (-1.5 * math.log(2 * math.pi * s2) - 0.5 * np.sum(d * d, axis=-1) / s2
                + math.log(self.I_rate) - self.I_rate * np.asarray(I))

    @classmethod
    def from_values(cls, grid: PhaseGrid, values, weight=None, widen: float = 1.2) -> "Proposal":
        """Moment-matched proposal for sup_x of ``values`` (optionally times ``weight``)."""
        F = np.max(as_values(values), axis=0) if np.ndim(as_values(values)) == 5 else as_values(values)
        w = grid.weights * F
        if weight is not None:
            w = w * weight(grid.velocities[..., None, :], grid.I)
        mass = w.sum()
        if not mass > 0:
            return cls()
        vel = np.broadcast_to(grid.velocities[..., None, :], w.shape + (3,))
        mean = np.tensordot(w, vel, axes=4) / mass
        d = vel - mean
        temp = float(np.sum(w * np.sum(d * d, axis=-1)) / (3 * mass))
        mean_I = float(np.sum(w * grid.I) / mass)
        return cls(tuple(float(m) for m in mean), widen * math.sqrt(max(temp, 1e-6)),
                   1.0 / (widen * max(mean_I, 1e-6)))

    def as_dict(self) -> dict:
        return {"mean": list(self.mean), "scale": self.scale, "I_rate": self.I_rate}


@dataclass(frozen=True)
class QuadratureSpec:
    """How collision integrals are discretised.

    ``orders`` (tensor mode) gives the rule sizes for v_* per axis, I_*, r, R
    and the polar/azimuthal sphere rule.
    """

    mode: str = "monte_carlo"
    n_samples: int = 64
    seed: int = 12345
    proposal: Proposal | None = None
    orders: tuple = (8, 6, 3, 4, 4, 8)

    def __post_init__(self):
        if self.mode not in QUAD_MODES:
            raise ValueError(f"unknown quadrature mode {self.mode!r}; expected one of {QUAD_MODES}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if len(self.orders) != 6 or min(self.orders) < 1:
            raise ValueError("orders must hold six positive rule sizes")

    def replace(self, **changes) -> "QuadratureSpec":
        d = {k: getattr(self, k) for k in ("mode", "n_samples", "seed", "proposal", "orders")}
        d.update(changes)
        return QuadratureSpec(**d)


@dataclass
class CollisionEstimate:
    value: np.ndarray | float
    std_error: np.ndarray | float
    n_effective: float

    def __float__(self):
        return float(np.asarray(self.value).reshape(-1)[0])


@dataclass
class SampleSet:
    """Collision-domain points. Arrays have a leading axis of length 1 (shared by
    all targets) or one row per target; ``mult`` carries every weight factor except
    the cross section and I_*^alpha."""

    v_star: np.ndarray
    I_star: np.ndarray
    r: np.ndarray
    R: np.ndarray
    sigma: np.ndarray
    mult: np.ndarray
    monte_carlo: bool
    meta: dict = dc_field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.mult.shape[1]


def _base_ratio(r, R, alpha):
    """Base measure over its normalised Beta-Beta-uniform density (= c_alpha)."""
    norm = 4 * math.pi * special.beta(alpha + 1, alpha + 1) * special.beta(1.5, 2 * alpha + 2)
    shape = (r * (1 - r)) ** alpha * np.sqrt(R) * (1 - R) ** (2 * alpha + 1)
    return norm * kernel.base_measure(r, R, alpha) / shape


def draw_samples(quad: QuadratureSpec, alpha: float, n_targets: int, proposal: Proposal,
                 label="collision") -> SampleSet:
    """Monte Carlo sample set with ``quad.n_samples`` points per target."""
    gen = rng.stream(quad.seed, label)
    shape = (n_targets, quad.n_samples)
    v_star, I_star = proposal.draw(gen, shape)
    r = gen.beta(alpha + 1, alpha + 1, size=shape)
    R = gen.beta(1.5, 2 * alpha + 2, size=shape)
    sigma = kernel.random_unit_vectors(gen, shape)
    # Beta draws can round onto the endpoints; those points carry zero weight
    r = np.clip(r, 1e-300, 1 - 1e-16)
    R = np.clip(R, 1e-300, 1 - 1e-16)
    mult = _base_ratio(r, R, alpha) * np.exp(-proposal.log_density(v_star, I_star)) / quad.n_samples
    return SampleSet(v_star, I_star, r, R, sigma, mult, True, {"proposal": proposal.as_dict()})


def tensor_samples(quad: QuadratureSpec, alpha: float, proposal: Proposal, max_points: int = 100_000):
    """Tensor rule mirroring the Monte Carlo law, yielded in chunks.

    Gauss-Hermite nodes of the Gaussian proposal for v_*, Gauss-Laguerre nodes
    of the exponential proposal for I_*, Gauss-Jacobi nodes of the base measure
    for r and R and a product sphere rule for sigma.
    """
    n_v, n_I, n_r, n_R, n_t, n_p = quad.orders
    xh, wh = np.polynomial.hermite.hermgauss(n_v)
    axis = math.sqrt(2.0) * proposal.scale * xh
    p_axis = wh / math.sqrt(math.pi)
    tl, wl = np.polynomial.laguerre.laggauss(n_I)
    I_nodes = tl / proposal.I_rate
    # Jacobi weight (1-y)^a (1+y)^b on [-1, 1] with x = (1+y)/2
    yr, wr = special.roots_jacobi(n_r, alpha, alpha)
    yR, wR = special.roots_jacobi(n_R, 2 * alpha + 1, 0.5)
    s_pts, s_w = kernel.sphere_rule(n_t, n_p)
    r, R, si = (a.ravel() for a in np.meshgrid(0.5 * (yr + 1), 0.5 * (yR + 1), np.arange(len(s_w)),
                                                indexing="ij"))
    w_in = np.einsum("i,j,k->ijk", wr / wr.sum(), wR / wR.sum(), s_w / s_w.sum()).ravel()
    w_in = w_in * _base_ratio(r, R, alpha)
    sigma = s_pts[si]
    outer_v = np.stack([a.ravel() for a in np.meshgrid(axis, axis, axis, indexing="ij")], axis=-1)
    outer_v = outer_v + np.asarray(proposal.mean)
    outer_p = np.einsum("i,j,k->ijk", p_axis, p_axis, p_axis).ravel()
    ov = np.repeat(outer_v, n_I, axis=0)
    oI = np.tile(I_nodes, len(outer_v))
    ow = np.repeat(outer_p, n_I) * np.tile(wl, len(outer_v))
    ow = ow * np.exp(-proposal.log_density(ov, oI))
    n_in = r.size
    step = max(1, max_points // n_in)
    for lo in range(0, len(ow), step):
        sl = slice(lo, lo + step)
        m = len(ow[sl])
        yield SampleSet(np.repeat(ov[sl], n_in, axis=0)[None], np.repeat(oI[sl], n_in)[None],
                        np.tile(r, m)[None], np.tile(R, m)[None], np.tile(sigma, (m, 1))[None],
                        (np.repeat(ow[sl], n_in) * np.tile(w_in, m))[None], False,
                        {"orders": list(quad.orders)})


@njit(cache=True)
def _cross(model, gamma, rel2, I, I_s, r, R, E):
    h = 0.5 * gamma
    if model == 0:
        return E ** h
    rel_g = rel2 ** h
    if model == 1:
        return R ** h * rel_g + (1.0 - R) ** h * (I + I_s) ** h
    return R ** h * rel_g + (r * (1.0 - R) * I) ** h + ((1.0 - r) * (1.0 - R) * I_s) ** h


@njit(parallel=True, cache=True)
def _collide(logg, g, ax1, ax2, ax3, axI, vmax, I_top, tv, tI, f_t,
             vs, Is, rr, RR, sig, mult, gamma, alpha, model, flip,
             gain, loss, s2_gain, s2_loss, s2_q, bad):
    nx = logg.shape[0]
    nt = tv.shape[0]
    shared = vs.shape[0] == 1
    M = mult.shape[1]
    for t in prange(nt):
        qs = np.zeros((3, 4), np.int64)
        qw = np.zeros((3, 4, 3))
        kk = np.zeros((3, 4), np.int64)
        tt = np.zeros((3, 4))
        inside = np.zeros(3, np.bool_)
        gv = np.zeros(3)
        v1 = tv[t, 0]
        v2 = tv[t, 1]
        v3 = tv[t, 2]
        I = tI[t]
        Ia = I ** alpha
        c = np.int64(0) if shared else np.int64(t)
        for s in range(M):
            w1 = vs[c, s, 0]
            w2 = vs[c, s, 1]
            w3 = vs[c, s, 2]
            I_s = Is[c, s]
            d1 = v1 - w1
            d2 = v2 - w2
            d3 = v3 - w3
            rel2 = d1 * d1 + d2 * d2 + d3 * d3
            E = 0.25 * rel2 + I + I_s
            r = rr[c, s]
            R = RR[c, s]
            B = _cross(model, gamma, rel2, I, I_s, r, R, E)
            W = mult[c, s] * B * I_s ** alpha
            if not np.isfinite(W):
                bad[t] = s
                continue
            if W == 0.0:
                continue
            k = math.sqrt(R * E)
            m1 = 0.5 * (v1 + w1)
            m2 = 0.5 * (v2 + w2)
            m3 = 0.5 * (v3 + w3)
            o1 = k * sig[c, s, 0]
            o2 = k * sig[c, s, 1]
            o3 = k * sig[c, s, 2]
            sgn = 1.0 if flip else -1.0
            Ip = r * (1.0 - R) * E
            Ips = (1.0 - r) * (1.0 - R) * E
            inside[0] = interp.stencil(w1, w2, w3, I_s, ax1, ax2, ax3, axI, vmax, I_top,
                                       qs[0], qw[0], kk[0], tt[0])
            inside[1] = interp.stencil(m1 + o1, m2 + o2, m3 + o3, Ip, ax1, ax2, ax3, axI, vmax, I_top,
                                       qs[1], qw[1], kk[1], tt[1])
            inside[2] = interp.stencil(m1 + sgn * o1, m2 + sgn * o2, m3 + sgn * o3, Ips,
                                       ax1, ax2, ax3, axI, vmax, I_top, qs[2], qw[2], kk[2], tt[2])
            for x in range(nx):
                for j in range(3):
                    if inside[j]:
                        gv[j] = interp.evaluate(logg, g, x, qs[j], qw[j], kk[j], tt[j])
                    else:
                        gv[j] = 0.0
                lo = W * gv[0]
                ga = W * Ia * gv[1] * gv[2]
                loss[x, t] += lo
                gain[x, t] += ga
                s2_loss[x, t] += lo * lo
                s2_gain[x, t] += ga * ga
                q = ga - f_t[x, t] * lo
                s2_q[x, t] += q * q


@dataclass
class CollisionTerms:
    """Gain and loss at every (x, target) with Monte Carlo variance sums."""

    gain: np.ndarray
    loss: np.ndarray
    se_gain: np.ndarray
    se_loss: np.ndarray
    se_q: np.ndarray
    n_samples: int

    def operator(self, f_targets) -> np.ndarray:
        return self.gain - f_targets * self.loss


def _se(s1, s2, M, mc):
    if not mc or M < 2:
        return np.zeros_like(s1)
    return np.sqrt(np.maximum(M * s2 - s1 * s1, 0.0) / (M - 1))


def collision_terms(values, grid: PhaseGrid, params: CollisionParams, samples,
                    targets_v, targets_I, f_targets=None) -> CollisionTerms:
    """Q+ and L of the field ``values`` at every x node and every target point.

    ``samples`` is a SampleSet or an iterable of deterministic chunks.
    """
    if not isinstance(samples, SampleSet):
        total = None
        for chunk in samples:
            part = collision_terms(values, grid, params, chunk, targets_v, targets_I, f_targets)
            if total is None:
                total = part
            else:
                total.gain += part.gain
                total.loss += part.loss
                total.n_samples += part.n_samples
        return total
    values = as_values(values)
    if values.ndim == 4:
        values = values[None]
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite values")
    tv = np.ascontiguousarray(np.asarray(targets_v, dtype=float).reshape(-1, 3))
    tI = np.ascontiguousarray(np.asarray(targets_I, dtype=float).reshape(-1))
    nx, nt = values.shape[0], tI.size
    if f_targets is None:
        f_targets = np.zeros((nx, nt))
    f_targets = np.ascontiguousarray(np.broadcast_to(f_targets, (nx, nt)), dtype=float)
    logg, g = interp.reduced(values, grid.I, params.alpha)
    out = [np.zeros((nx, nt)) for _ in range(5)]
    bad = np.full(nt, -1, np.int64)
    _collide(logg, g, *(np.ascontiguousarray(a) for a in grid.v_axes), np.ascontiguousarray(grid.I),
             np.array(grid.v_max), float(grid.I_max), tv, tI, f_targets,
             np.ascontiguousarray(samples.v_star), np.ascontiguousarray(samples.I_star),
             np.ascontiguousarray(samples.r), np.ascontiguousarray(samples.R),
             np.ascontiguousarray(samples.sigma), np.ascontiguousarray(samples.mult),
             float(params.gamma), float(params.alpha), KERNEL_MODELS.index(params.kernel_model),
             mutations.active("sigma_sign"), *out, bad)
    if np.any(bad >= 0):
        t = int(np.argmax(bad >= 0))
        raise FloatingPointError(f"non-finite collision integrand at target {t}, sample {bad[t]}")
    gain, loss, s2g, s2l, s2q = out
    M, mc = samples.n, samples.monte_carlo
    return CollisionTerms(gain, loss, _se(gain, s2g, M, mc), _se(loss, s2l, M, mc),
                          _se(gain - f_targets * loss, s2q, M, mc), M)


def grid_targets(grid: PhaseGrid) -> tuple:
    """All (v, I) nodes in storage order, as ((N, 3), (N,)) arrays."""
    v = np.broadcast_to(grid.velocities[..., None, :], grid.node_shape + (3,)).reshape(-1, 3)
    I = np.broadcast_to(grid.I, grid.node_shape).reshape(-1)
    return np.ascontiguousarray(v), np.ascontiguousarray(I)


@njit(parallel=True, cache=True)
def _loss_reduced(fT, src_v, src_I, src_w, tv, tI, gamma, out):
    nx = fT.shape[1]
    h = 0.5 * gamma
    for t in prange(tv.shape[0]):
        acc = np.zeros(nx)
        for s in range(src_v.shape[0]):
            d1 = tv[t, 0] - src_v[s, 0]
            d2 = tv[t, 1] - src_v[s, 1]
            d3 = tv[t, 2] - src_v[s, 2]
            E = 0.25 * (d1 * d1 + d2 * d2 + d3 * d3) + tI[t] + src_I[s]
            e = src_w[s] * E ** h
            for x in range(nx):
                acc[x] += e * fT[s, x]
        for x in range(nx):
            out[x, t] = acc[x]


def loss_reduced(values, grid: PhaseGrid, gamma: float, targets_v, targets_I) -> np.ndarray:
    """c_alpha * sum over grid nodes of f(x, v_*, I_*) E^{gamma/2} w, shape (n_x, n_targets).

    Exact reduction of L for the total-energy kernel: E does not depend on
    (r, R, sigma), which then integrate to c_alpha.
    """
    values = as_values(values)
    if values.ndim == 4:
        values = values[None]
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite values")
    src_v, src_I = grid_targets(grid)
    src_w = np.ascontiguousarray(grid.weights.reshape(-1))
    keep = np.any(values.reshape(values.shape[0], -1) != 0, axis=0)
    fT = np.ascontiguousarray(values.reshape(values.shape[0], -1)[:, keep].T)
    tv = np.ascontiguousarray(np.asarray(targets_v, dtype=float).reshape(-1, 3))
    tI = np.ascontiguousarray(np.asarray(targets_I, dtype=float).reshape(-1))
    out = np.zeros((values.shape[0], tI.size))
    if keep.any():
        _loss_reduced(fT, np.ascontiguousarray(src_v[keep]), np.ascontiguousarray(src_I[keep]),
                      np.ascontiguousarray(src_w[keep]), tv, tI, float(gamma), out)
    # alpha is carried by the caller through c_alpha
    return out


def _samples_for(f: DistributionField, quad: QuadratureSpec, params, n_targets, label):
    proposal = quad.proposal or Proposal.from_values(f.grid, f.values)
    if quad.mode == "tensor":
        return list(tensor_samples(quad, params.alpha, proposal))
    return draw_samples(quad, params.alpha, n_targets, proposal, label)


def _point_args(v, I):
    v = np.asarray(v, dtype=float)
    I = np.asarray(I, dtype=float)
    shape = np.broadcast_shapes(v.shape[:-1], I.shape)
    return (np.broadcast_to(v, shape + (3,)).reshape(-1, 3), np.broadcast_to(I, shape).reshape(-1),
            shape)


def _estimate(value, se, n, shape):
    value = value.reshape(shape)
    se = se.reshape(shape)
    if shape == ():
        return CollisionEstimate(float(value), float(se), float(n))
    return CollisionEstimate(value, se, float(n))


def loss_frequency(f: DistributionField, x_index: int, v, I, params: CollisionParams,
                   quad: QuadratureSpec | None = None) -> CollisionEstimate:
    """Collision frequency L(f)(x, v, I).

    Without ``quad`` the deterministic reduction for the total-energy kernel is
    used; with ``quad`` the full collision-domain integral is estimated.
    """
    tv, tI, shape = _point_args(v, I)
    if f.values.size == 0:
        raise ValueError("empty grid")
    if quad is None:
        if params.kernel_model != "total_energy":
            raise ValueError("the reduced loss path needs the total_energy kernel; pass a QuadratureSpec")
        vals = loss_reduced(f.values[x_index:x_index + 1], f.grid, params.gamma, tv, tI)[0]
        vals = kernel.c_alpha(params.alpha) * vals
        return _estimate(vals, np.zeros_like(vals), f.grid.weights.size, shape)
    samples = _samples_for(f, quad, params, tI.size, "loss")
    terms = collision_terms(f.values[x_index:x_index + 1], f.grid, params, samples, tv, tI)
    return _estimate(terms.loss[0], terms.se_loss[0], terms.n_samples, shape)


def gain_term(f: DistributionField, x_index: int, v, I, params: CollisionParams,
              quad: QuadratureSpec) -> CollisionEstimate:
    """Gain term Q+(f, f)(x, v, I)."""
    tv, tI, shape = _point_args(v, I)
    samples = _samples_for(f, quad, params, tI.size, "gain")
    terms = collision_terms(f.values[x_index:x_index + 1], f.grid, params, samples, tv, tI)
    return _estimate(terms.gain[0], terms.se_gain[0], terms.n_samples, shape)


def collision_operator(f: DistributionField, x_index: int, v, I, params: CollisionParams,
                       quad: QuadratureSpec) -> CollisionEstimate:
    """Q(f, f) = Q+(f, f) - f L(f) from one shared sample set."""
    tv, tI, shape = _point_args(v, I)
    samples = _samples_for(f, quad, params, tI.size, "operator")
    f_here = interp.Interpolant(f.grid, f.values[x_index], params.alpha)(tv, tI)[None]
    terms = collision_terms(f.values[x_index:x_index + 1], f.grid, params, samples, tv, tI, f_here)
    return _estimate(terms.operator(f_here)[0], terms.se_q[0], terms.n_samples, shape)


# ---------------------------------------------------------------------------
# weak-form functionals


def _as_callable(f, params, x_index):
    if isinstance(f, DistributionField):
        return interp.Interpolant(f.grid, f.values[x_index], params.alpha)
    return f


def _base_density(r, R, alpha):
    lb = special.betaln(alpha + 1, alpha + 1) + special.betaln(1.5, 2 * alpha + 2)
    return np.exp((alpha * np.log(r * (1 - r)) + 0.5 * np.log(R)
                   + (2 * alpha + 1) * np.log1p(-R)) - lb) / (4 * math.pi)


def _draw_pairs(gen, proposal, alpha, n):
    v, I = proposal.draw(gen, n)
    v_s, I_s = proposal.draw(gen, n)
    r = np.clip(gen.beta(alpha + 1, alpha + 1, size=n), 1e-300, 1 - 1e-16)
    R = np.clip(gen.beta(1.5, 2 * alpha + 2, size=n), 1e-300, 1 - 1e-16)
    sigma = kernel.random_unit_vectors(gen, n)
    logq = proposal.log_density(v, I) + proposal.log_density(v_s, I_s)
    return v, v_s, I, I_s, r, R, sigma, logq


def _mean_se(chunks):
    y = np.concatenate(chunks)
    n = y.size
    return float(y.mean()), float(y.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def gain_side_weak(f, test_weight, params: CollisionParams, quad: QuadratureSpec,
                   x_index: int = 0, label="gain-side", chunk: int = 200_000) -> tuple:
    """Estimate of the integral of test_weight * Q+(f, f) over (v, I).

    The gain integral is written in the pre-collision variables and evaluated
    by sampling post-collision points (v', v'_*, I', I'_*, r', R', sigma'),
    mapping them back through the Borgnakke-Larsen transform and dividing by
    the Jacobian of that transform.
    """
    fn = _as_callable(f, params, x_index)
    gen = rng.stream(quad.seed, label)
    a = params.alpha
    out = []
    left = quad.n_samples
    while left > 0:
        n = min(chunk, left)
        left -= n
        vp, vps, Ip, Ips, rp, Rp, sp, logq = _draw_pairs(gen, quad.proposal, a, n)
        v, v_s, I, I_s = kernel.bl_forward(vp, vps, Ip, Ips, rp, Rp, sp)
        r, R, _ = kernel.bl_inverse(vp, vps, Ip, Ips)
        R = np.clip(R, 1e-15, 1 - 1e-15)
        with np.errstate(divide="ignore", invalid="ignore"):
            ff = fn(vp, Ip) * fn(vps, Ips) / (Ip * Ips) ** a
            B = kernel.cross_section(params.kernel_model, v, v_s, I, I_s, r, R, params.gamma)
            y = (test_weight(v, I) * ff * B * kernel.measure_weight(r, R, I, I_s, a)
                 / kernel.jacobian_factor(R, Rp)
                 / (np.exp(logq) * _base_density(rp, Rp, a)))
        out.append(np.where(np.isfinite(y), y, 0.0))
    return _mean_se(out)


def loss_side_weak(f, test_weight, params: CollisionParams, quad: QuadratureSpec,
                   x_index: int = 0, label="loss-side", chunk: int = 200_000) -> tuple:
    """Estimate of the integral of test_weight(v', I') f f_* B over the full domain."""
    fn = _as_callable(f, params, x_index)
    gen = rng.stream(quad.seed, label)
    a = params.alpha
    out = []
    left = quad.n_samples
    while left > 0:
        n = min(chunk, left)
        left -= n
        v, v_s, I, I_s, r, R, sigma, logq = _draw_pairs(gen, quad.proposal, a, n)
        vp, _, Ip, _ = kernel.bl_forward(v, v_s, I, I_s, r, R, sigma)
        B = kernel.cross_section(params.kernel_model, v, v_s, I, I_s, r, R, params.gamma)
        y = test_weight(vp, Ip) * fn(v, I) * fn(v_s, I_s) * B * _base_ratio(r, R, a) / np.exp(logq)
        out.append(y)
    return _mean_se(out)


def symmetry_functional(f, test_weight, params: CollisionParams, quad: QuadratureSpec,
                        x_index: int = 0) -> tuple:
    """(lhs, rhs, combined standard error) for the weak gain identity

        int test_weight(v, I) Q+(f, f) dv dI = int test_weight(v', I') f f_* B dB dv dI.

    ``f`` is a DistributionField (interpolated at ``x_index``) or a callable
    f(v, I). The two sides use independent random streams.
    """
    if quad.mode != "monte_carlo":
        raise ValueError("symmetry_functional needs Monte Carlo quadrature")
    if quad.proposal is None:
        if not isinstance(f, DistributionField):
            raise ValueError("a proposal is required for callable fields")
        quad = quad.replace(proposal=Proposal.from_values(f.grid, f.values[x_index], test_weight))
    if isinstance(f, DistributionField) and not np.any(f.values[x_index]):
        return 0.0, 0.0, 0.0
    lhs, se_l = gain_side_weak(f, test_weight, params, quad, x_index)
    rhs, se_r = loss_side_weak(f, test_weight, params, quad, x_index)
    return lhs, rhs, math.hypot(se_l, se_r)


def gain_at_points(f, g, v, I, params: CollisionParams, quad: QuadratureSpec,
                   label="gain-points", chunk: int = 1_000_000) -> CollisionEstimate:
    """Symmetrised bilinear gain (Q+(f, g) + Q+(g, f)) / 2 at the points (v, I).

    ``f`` and ``g`` are callables f(v, I); the estimate is Monte Carlo over
    (v_*, I_*, r, R, sigma) with ``quad.n_samples`` points per target, drawn
    from ``quad.proposal``.
    """
    if quad.proposal is None:
        raise ValueError("gain_at_points needs an explicit proposal")
    tv, tI, shape = _point_args(v, I)
    gen = rng.stream(quad.seed, label)
    n, al = quad.n_samples, params.alpha
    per = max(1, chunk // n)
    vals, ses = [], []
    for s in range(0, tI.size, per):
        vt = tv[s:s + per, None, :]
        It = tI[s:s + per, None]
        m = vt.shape[0]
        v_s, I_s = quad.proposal.draw(gen, (m, n))
        r = np.clip(gen.beta(al + 1, al + 1, size=(m, n)), 1e-300, 1 - 1e-16)
        R = np.clip(gen.beta(1.5, 2 * al + 2, size=(m, n)), 1e-300, 1 - 1e-16)
        sigma = kernel.random_unit_vectors(gen, (m, n))
        vp, vsp, Ip, Isp = kernel.bl_forward(vt, v_s, It, I_s, r, R, sigma)
        B = kernel.cross_section(params.kernel_model, vt, v_s, It, I_s, r, R, params.gamma)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            pair = 0.5 * (f(vp, Ip) * g(vsp, Isp) + g(vp, Ip) * f(vsp, Isp))
            if al:
                pair = pair * ((It * I_s) / (Ip * Isp)) ** al
            y = pair * B * _base_ratio(r, R, al) * np.exp(-quad.proposal.log_density(v_s, I_s))
        y = np.where(np.isfinite(y), y, 0.0)
        vals.append(y.mean(axis=1))
        ses.append(y.std(axis=1, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(m))
    return _estimate(np.concatenate(vals), np.concatenate(ses), n, shape)
