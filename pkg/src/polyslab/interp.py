"""Off-grid evaluation of stored fields.

Fields are interpolated through g = f / I^alpha. Where every stencil value is
positive the interpolant is tensor-quadratic in log g, which reproduces any
(drifting) Maxwellian exactly; otherwise it falls back to multilinear
interpolation of g. Points outside the truncated box evaluate to 0.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _lagrange(nodes, start, m, y, w):
    for a in range(m):
        num = 1.0
        den = 1.0
        za = nodes[start + a]
        for b in range(m):
            if b != a:
                zb = nodes[start + b]
                num *= y - zb
                den *= za - zb
        w[a] = num / den


@njit(cache=True)
def _axis_stencil(nodes, y, q_start, q_w, k, t, ax):
    """Quadratic (or shorter) Lagrange stencil and the linear cell of axis ``ax``."""
    n = nodes.size
    m = min(3, n)
    j = np.searchsorted(nodes, y)
    if j == 0:
        near = 0
    elif j >= n:
        near = n - 1
    elif y - nodes[j - 1] <= nodes[j] - y:
        near = j - 1
    else:
        near = j
    s = near - 1 if m == 3 else 0
    if s < 0:
        s = 0
    if s > n - m:
        s = n - m
    q_start[ax] = s
    _lagrange(nodes, s, m, y, q_w[ax])
    if n == 1:
        k[ax] = 0
        t[ax] = 0.0
        return
    c = j - 1
    if c < 0:
        c = 0
    if c > n - 2:
        c = n - 2
    tt = (y - nodes[c]) / (nodes[c + 1] - nodes[c])
    k[ax] = c
    t[ax] = min(1.0, max(0.0, tt))


@njit(cache=True)
def stencil(v1, v2, v3, I, ax1, ax2, ax3, axI, vmax, I_top, q_start, q_w, k, t):
    """Fill stencil buffers for the point (v, I); False if it lies outside the box."""
    if abs(v1) > vmax[0] or abs(v2) > vmax[1] or abs(v3) > vmax[2] or I < 0.0 or I > I_top:
        return False
    _axis_stencil(ax1, v1, q_start, q_w, k, t, 0)
    _axis_stencil(ax2, v2, q_start, q_w, k, t, 1)
    _axis_stencil(ax3, v3, q_start, q_w, k, t, 2)
    _axis_stencil(axI, I, q_start, q_w, k, t, 3)
    return True


@njit(cache=True)
def evaluate(logg, g, x, q_start, q_w, k, t):
    """Interpolated g at stencil buffers for x-slice ``x`` of (n_x, n1, n2, n3, nI) arrays."""
    n1 = min(3, logg.shape[1])
    n2 = min(3, logg.shape[2])
    n3 = min(3, logg.shape[3])
    n4 = min(3, logg.shape[4])
    s0 = q_start[0]
    s1 = q_start[1]
    s2 = q_start[2]
    s3 = q_start[3]
    acc = 0.0
    ok = True
    for a in range(n1):
        wa = q_w[0, a]
        for b in range(n2):
            wab = wa * q_w[1, b]
            for c in range(n3):
                wabc = wab * q_w[2, c]
                for d in range(n4):
                    val = logg[x, s0 + a, s1 + b, s2 + c, s3 + d]
                    if val == -np.inf:
                        ok = False
                        break
                    acc += wabc * q_w[3, d] * val
                if not ok:
                    break
            if not ok:
                break
        if not ok:
            break
    if ok:
        return math.exp(acc)
    # multilinear fallback in g
    out = 0.0
    for a in range(2):
        if a == 1 and g.shape[1] == 1:
            break
        wa = t[0] if a else 1.0 - t[0]
        for b in range(2):
            if b == 1 and g.shape[2] == 1:
                break
            wab = wa * (t[1] if b else 1.0 - t[1])
            for c in range(2):
                if c == 1 and g.shape[3] == 1:
                    break
                wabc = wab * (t[2] if c else 1.0 - t[2])
                for d in range(2):
                    if d == 1 and g.shape[4] == 1:
                        break
                    w = wabc * (t[3] if d else 1.0 - t[3])
                    out += w * g[x, k[0] + a, k[1] + b, k[2] + c, k[3] + d]
    return out


def reduced(values: np.ndarray, I_nodes: np.ndarray, alpha: float) -> tuple:
    """(log g, g) arrays for stored f values of shape (n_x, n1, n2, n3, nI)."""
    g = values / I_nodes ** alpha if alpha else values.copy()
    with np.errstate(divide="ignore"):
        logg = np.where(g > 0, np.log(np.where(g > 0, g, 1.0)), -np.inf)
    return np.ascontiguousarray(logg), np.ascontiguousarray(g)


@njit(cache=True)
def _interp_points(logg, g, x, pts, Ivals, ax1, ax2, ax3, axI, vmax, I_top, alpha, out):
    q_start = np.zeros(4, np.int64)
    q_w = np.zeros((4, 3))
    k = np.zeros(4, np.int64)
    t = np.zeros(4)
    for p in range(pts.shape[0]):
        if stencil(pts[p, 0], pts[p, 1], pts[p, 2], Ivals[p], ax1, ax2, ax3, axI, vmax, I_top,
                   q_start, q_w, k, t):
            out[p] = evaluate(logg, g, x, q_start, q_w, k, t) * Ivals[p] ** alpha
        else:
            out[p] = 0.0


class Interpolant:
    """Continuous extension of a stored field at a fixed x node (or of sup_x f)."""

    def __init__(self, grid, values, alpha: float = 0.0):
        values = np.asarray(values, dtype=float)
        if values.ndim == 4:
            values = values[None]
        self.grid = grid
        self.alpha = float(alpha)
        self.logg, self.g = reduced(values, grid.I, self.alpha)
        self._axes = tuple(np.ascontiguousarray(a) for a in grid.v_axes)
        self._vmax = np.array(grid.v_max)

    def __call__(self, v, I, x_index: int = 0) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        I = np.asarray(I, dtype=float)
        shape = np.broadcast_shapes(v.shape[:-1], I.shape)
        pts = np.ascontiguousarray(np.broadcast_to(v, shape + (3,)).reshape(-1, 3))
        Iv = np.ascontiguousarray(np.broadcast_to(I, shape).ravel())
        out = np.empty(Iv.size)
        _interp_points(self.logg, self.g, int(x_index), pts, Iv, *self._axes,
                       np.ascontiguousarray(self.grid.I), self._vmax, float(self.grid.I_max),
                       self.alpha, out)
        return out.reshape(shape)
