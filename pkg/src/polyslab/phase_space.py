"""Slab phase-space grid, the exponential weight and grid quadrature.

The unknown f(x, v, I) lives on a tensor grid: x in [0, 1], v in a truncated
box [-v_max, v_max]^3 with cell-centred nodes (so v1 = 0 is never a node) and
internal energy I on strictly positive quadrature nodes.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

I_RULES = ("laguerre", "legendre", "midpoint")

FIELD_SCHEMA = "polyslab.field/1"


KERNEL_MODELS = ("total_energy", "detached_kinetic_internal", "detached_per_particle")


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class CollisionParams:
    """Physical parameters: kernel exponent gamma, internal-energy exponent
    alpha, weight exponent a, slab parameter epsilon and the kernel model."""

    gamma: float = 1.0
    alpha: float = 0.0
    weight_a: float = 0.5
    epsilon: float = 0.05
    kernel_model: str = "total_energy"

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list:
        out = []
        if not 0.0 <= self.gamma <= 1.0:
            out.append(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.alpha < 0:
            out.append(f"alpha must be non-negative, got {self.alpha}")
        if self.weight_a <= 0:
            out.append(f"weight_a must be positive, got {self.weight_a}")
        if self.epsilon <= 0:
            out.append(f"epsilon must be positive, got {self.epsilon}")
        if self.kernel_model not in KERNEL_MODELS:
            out.append(f"unknown kernel model {self.kernel_model!r}")
        return out

    def replace(self, **changes) -> "CollisionParams":
        return CollisionParams(**{**asdict(self), **changes})

    def as_dict(self) -> dict:
        return asdict(self)


def _triple(value, name) -> tuple:
    if np.ndim(value) == 0:
        return (value, value, value)
    value = tuple(value)
    if len(value) != 3:
        raise GridError(f"{name} must be a scalar or a 3-sequence, got {value!r}")
    return value


@dataclass(frozen=True)
class GridSpec:
    """Declarative description of a PhaseGrid.

    ``n_v`` and ``v_max`` may be scalars or per-axis triples. ``I_rule``
    selects the internal-energy rule: a scaled Gauss-Laguerre rule (nodes
    ``I_scale * x_k``, integrating over [0, inf)), Gauss-Legendre on
    (0, I_max) or the midpoint rule on (0, I_max).
    """

    n_x: int = 9
    n_v: int | tuple = 12
    n_I: int = 6
    v_max: float | tuple = 6.0
    I_max: float = 30.0
    I_rule: str = "laguerre"
    I_scale: float = 1.5

    def as_dict(self) -> dict:
        d = asdict(self)
        for key in ("n_v", "v_max"):
            if isinstance(d[key], tuple):
                d[key] = list(d[key])
        return d


@dataclass(frozen=True, eq=False)
class PhaseGrid:
    spec: GridSpec
    x: np.ndarray
    v_axes: tuple
    I: np.ndarray
    I_weights: np.ndarray
    I_max: float

    @property
    def n_x(self) -> int:
        return self.x.size

    @property
    def n_v(self) -> tuple:
        return tuple(a.size for a in self.v_axes)

    @property
    def n_I(self) -> int:
        return self.I.size

    @property
    def v_max(self) -> tuple:
        return tuple(float(m) for m in _triple(self.spec.v_max, "v_max"))

    @property
    def dv(self) -> tuple:
        return tuple(2.0 * m / n for m, n in zip(self.v_max, self.n_v))

    @property
    def shape(self) -> tuple:
        """Shape of stored field values: (n_x, n_v1, n_v2, n_v3, n_I)."""
        return (self.n_x,) + self.n_v + (self.n_I,)

    @property
    def node_shape(self) -> tuple:
        return self.n_v + (self.n_I,)

    @cached_property
    def velocities(self) -> np.ndarray:
        """Velocity nodes as an array of shape (n_v1, n_v2, n_v3, 3)."""
        mesh = np.meshgrid(*self.v_axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights for dv dI, shape (n_v1, n_v2, n_v3, n_I)."""
        cell = float(np.prod(self.dv))
        w = np.full(self.n_v, cell)
        return w[..., None] * self.I_weights

    @cached_property
    def x_weights(self) -> np.ndarray:
        """Composite trapezoid weights on the x nodes."""
        h = np.diff(self.x)
        w = np.zeros_like(self.x)
        w[:-1] += h / 2
        w[1:] += h / 2
        return w

    def zeros(self) -> "DistributionField":
        return DistributionField(self, np.zeros(self.shape))

    def broadcast(self, node_values: np.ndarray) -> "DistributionField":
        """Field constant in x built from values on the (v, I) nodes."""
        node_values = np.asarray(node_values, dtype=float)
        if node_values.shape != self.node_shape:
            raise GridError(f"expected node shape {self.node_shape}, got {node_values.shape}")
        return DistributionField(self, np.broadcast_to(node_values, self.shape).copy())

    def refined(self, factor: int = 2, axes: Sequence[int] = (0, 1, 2)) -> "PhaseGrid":
        n_v = list(_triple(self.spec.n_v, "n_v"))
        for a in axes:
            n_v[a] = int(n_v[a]) * factor
        return build_grid(GridSpec(**{**self.spec.__dict__, "n_v": tuple(n_v)}))


def _energy_rule(spec: GridSpec) -> tuple:
    n = spec.n_I
    if spec.I_rule == "laguerre":
        if spec.I_scale <= 0:
            raise GridError("I_scale must be positive")
        t, w = np.polynomial.laguerre.laggauss(n)
        nodes = spec.I_scale * t
        weights = spec.I_scale * w * np.exp(t)
        if n > 1:
            top = nodes[-1] + 0.5 * (nodes[-1] - nodes[-2])
        else:
            top = 2.0 * nodes[0]
        return nodes, weights, float(top)
    if spec.I_max <= 0:
        raise GridError("I_max must be positive")
    if spec.I_rule == "legendre":
        t, w = np.polynomial.legendre.leggauss(n)
        return 0.5 * spec.I_max * (t + 1.0), 0.5 * spec.I_max * w, float(spec.I_max)
    if spec.I_rule == "midpoint":
        h = spec.I_max / n
        return (np.arange(n) + 0.5) * h, np.full(n, h), float(spec.I_max)
    raise GridError(f"unknown I_rule {spec.I_rule!r}; expected one of {I_RULES}")


def build_grid(spec: GridSpec | None = None, **overrides) -> PhaseGrid:
    """Build a PhaseGrid; keyword overrides patch ``spec`` field by field."""
    spec = GridSpec(**{**(spec or GridSpec()).__dict__, **overrides})
    if spec.n_x < 2:
        raise GridError("n_x must be at least 2 (the grid must contain x=0 and x=1)")
    if spec.n_I < 1:
        raise GridError("n_I must be at least 1")
    n_v = tuple(int(n) for n in _triple(spec.n_v, "n_v"))
    v_max = tuple(float(m) for m in _triple(spec.v_max, "v_max"))
    if any(n < 1 for n in n_v):
        raise GridError("velocity node counts must be positive")
    if n_v[0] % 2:
        raise GridError(f"n_v on axis 1 must be even so that v1=0 is not a node, got {n_v[0]}")
    if any(m <= 0 for m in v_max):
        raise GridError("v_max must be positive")
    x = np.linspace(0.0, 1.0, spec.n_x)
    axes = tuple(-m + (np.arange(n) + 0.5) * (2.0 * m / n) for n, m in zip(n_v, v_max))
    I, wI, I_top = _energy_rule(spec)
    for a in axes + (x, I, wI):
        a.setflags(write=False)
    return PhaseGrid(spec=spec, x=x, v_axes=axes, I=I, I_weights=wI, I_max=I_top)


def weight_phi(v, I, a: float):
    """exp(a (|v|^2/2 + I)); ``v`` has a trailing axis of length 3."""
    v = np.asarray(v, dtype=float)
    return np.exp(a * (0.5 * np.sum(v * v, axis=-1) + np.asarray(I, dtype=float)))


class DistributionField:
    """Values of f on a PhaseGrid, shape (n_x, n_v1, n_v2, n_v3, n_I)."""

    def __init__(self, grid: PhaseGrid, values, *, check: bool = True):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise GridError(f"field shape {values.shape} does not match grid {grid.shape}")
        if check:
            if not np.all(np.isfinite(values)):
                raise ValueError("field contains non-finite values")
            if np.any(values < 0):
                raise ValueError("distribution values must be non-negative")
        self.grid = grid
        self.values = values

    def sup_x(self) -> np.ndarray:
        """max over x of |f|, on the (v, I) nodes."""
        return np.max(np.abs(self.values), axis=0)

    def scaled(self, c: float) -> "DistributionField":
        return DistributionField(self.grid, c * self.values)

    def __add__(self, other: "DistributionField") -> "DistributionField":
        return DistributionField(self.grid, self.values + other.values)

    def __repr__(self):
        return f"DistributionField(shape={self.values.shape}, max={self.values.max():.4g})"


def as_values(f) -> np.ndarray:
    return f.values if isinstance(f, DistributionField) else np.asarray(f, dtype=float)


def maxwellian_nodes(grid: PhaseGrid, n=1.0, T=1.0, u=(0.0, 0.0, 0.0), alpha=0.0) -> np.ndarray:
    """Equilibrium n (2 pi T)^{-3/2} I^alpha exp(-(|v-u|^2/2 + I)/T) / (Gamma(alpha+1) T^{alpha+1})."""
    return maxwellian(grid.velocities[..., None, :], grid.I, n=n, T=T, u=u, alpha=alpha)


def maxwellian(v, I, n=1.0, T=1.0, u=(0.0, 0.0, 0.0), alpha=0.0):
    v = np.asarray(v, dtype=float)
    I = np.asarray(I, dtype=float)
    if T <= 0:
        raise ValueError("temperature must be positive")
    c = v - np.asarray(u, dtype=float)
    kin = 0.5 * np.sum(c * c, axis=-1)
    norm = n * (2 * math.pi * T) ** -1.5 / (math.gamma(alpha + 1.0) * T ** (alpha + 1.0))
    with np.errstate(divide="ignore"):
        return norm * I ** alpha * np.exp(-(kin + I) / T)


def maxwellian_field(grid: PhaseGrid, n=1.0, T=1.0, u=(0.0, 0.0, 0.0), alpha=0.0) -> DistributionField:
    return grid.broadcast(maxwellian_nodes(grid, n, T, u, alpha))


def maxwellian_weighted_mass(n, T, a, alpha) -> float:
    """Closed form of the phi-weighted integral of a Maxwellian centred at 0."""
    if a * T >= 1:
        return math.inf
    return n * (1.0 - a * T) ** -(alpha + 2.5)


def integrate_weighted(f, grid: PhaseGrid, weight: Callable | np.ndarray | None = None):
    """Grid quadrature of weight(v, I) f over (v, I) at every x node.

    Returns ``(per_x, sup)`` with ``sup`` the maximum over x.
    """
    values = as_values(f)
    if weight is None:
        w = grid.weights
    elif callable(weight):
        w = grid.weights * weight(grid.velocities[..., None, :], grid.I)
    else:
        w = grid.weights * np.asarray(weight)
    per_x = np.tensordot(values, w, axes=(tuple(range(1, 5)), tuple(range(4))))
    if not np.all(np.isfinite(per_x)):
        raise FloatingPointError("weighted integral is not finite")
    return per_x, float(per_x.max())


def tail_diagnostic(grid: PhaseGrid, n=1.0, T=1.0, a=0.0, alpha=0.0) -> float:
    """Relative phi-weighted Maxwellian mass missing from the truncated grid."""
    exact = maxwellian_weighted_mass(n, T, a, alpha)
    _, got = integrate_weighted(maxwellian_field(grid, n, T, alpha=alpha), grid,
                                lambda v, I: weight_phi(v, I, a))
    return abs(exact - got) / exact


def save_field(path, f: DistributionField, extra: dict | None = None) -> None:
    """Binary dump: one JSON header line, then row-major little-endian float64."""
    header = {
        "schema": FIELD_SCHEMA,
        "shape": list(f.values.shape),
        "grid": f.grid.spec.as_dict(),
        "order": "x,v1,v2,v3,I",
    }
    if extra:
        header["extra"] = extra
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_field(path) -> DistributionField:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        if header.get("schema") != FIELD_SCHEMA:
            raise ValueError(f"unsupported field schema {header.get('schema')!r}")
        raw = fh.read()
    g = header["grid"]
    for key in ("n_v", "v_max"):
        if isinstance(g[key], list):
            g[key] = tuple(g[key])
    grid = build_grid(GridSpec(**g))
    values = np.frombuffer(raw, dtype="<f8").reshape(header["shape"])
    return DistributionField(grid, values.copy(), check=False)
