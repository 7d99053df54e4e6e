"""Plain-text run configuration.

One ``key = value`` pair per line; ``#`` starts a comment. Triples (drifts,
per-axis grid sizes) and lists are comma separated. Every key is listed in
SCHEMA; anything else is an error.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

THREAD_ENV = "POLYSLAB_THREADS"


def apply_thread_env() -> int | None:
    """Honor POLYSLAB_THREADS (worker threads for the collision kernels)."""
    raw = os.environ.get(THREAD_ENV)
    if not raw:
        return None
    import numba

    n = int(raw)
    if n < 1:
        raise ValueError(f"{THREAD_ENV} must be a positive integer, got {raw!r}")
    n = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


def _floats(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _ints(text):
    return tuple(int(t) for t in text.split(",") if t.strip())


def _int_or_triple(text):
    vals = _ints(text)
    return vals[0] if len(vals) == 1 else vals


def _float_or_triple(text):
    vals = _floats(text)
    return vals[0] if len(vals) == 1 else vals


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


# key: (parser, default, help)
SCHEMA = {
    "gamma": (float, 1.0, "kernel exponent, 0 <= gamma <= 1"),
    "alpha": (float, 0.0, "internal-energy weight exponent, alpha >= 0"),
    "a": (float, 0.5, "weight exponent of phi = exp(a(|v|^2/2 + I)), 0 < a < 1"),
    "epsilon": (float, 0.05, "slab width (inverse Knudsen number)"),
    "kernel_model": (str, "total_energy", "total_energy | detached_kinetic_internal | detached_per_particle"),
    "n_x": (int, 9, "x nodes on [0, 1]"),
    "n_v": (_int_or_triple, 12, "velocity nodes per axis (scalar or triple)"),
    "n_I": (int, 6, "internal-energy nodes"),
    "v_max": (_float_or_triple, 6.0, "velocity box half width"),
    "I_max": (float, 30.0, "internal-energy cutoff (legendre/midpoint rules)"),
    "I_rule": (str, "laguerre", "laguerre | legendre | midpoint"),
    "I_scale": (float, 1.5, "Laguerre node scale"),
    "quad_mode": (str, "monte_carlo", "monte_carlo | tensor"),
    "n_samples": (int, 64, "collision samples per target (monte_carlo)"),
    "orders": (_ints, (8, 6, 3, 4, 4, 8), "tensor rule sizes: v*, I*, r, R, polar, azimuth"),
    "seed": (int, 12345, "root seed of all random streams"),
    "boundary": (str, "cutoff_maxwellian", "cutoff_maxwellian | half_maxwellian"),
    "left_n": (float, 0.1, "left wall density"),
    "left_T": (float, 1.0, "left wall temperature"),
    "left_u": (_floats, (0.0, 0.0, 0.0), "left wall drift"),
    "left_beta": (float, 1.0, "left wall cutoff exponent"),
    "right_n": (float, 0.1, "right wall density"),
    "right_T": (float, 0.5, "right wall temperature"),
    "right_u": (_floats, (0.0, 0.0, 0.0), "right wall drift"),
    "right_beta": (float, 1.0, "right wall cutoff exponent"),
    "initial": (str, "zero", "zero | maxwellian | boundary"),
    "tol": (float, 0.0, "Picard tolerance in ||.||_0; 0 means 1e-6 ||f_LR||_0"),
    "max_iter": (int, 100, "Picard iteration cap"),
    "auto_halve": (_bool, True, "halve epsilon on divergence (up to 6 times)"),
    "eps_list": (_floats, (0.2, 0.1, 0.05, 0.025), "epsilon values of a sweep"),
    "contraction_seeds": (int, 4, "sample sets averaged per contraction ratio"),
    "verify_samples": (int, 200_000, "samples per statistical bound check"),
    "verify_quick": (_bool, False, "reduced battery for smoke runs"),
}

BOUNDARY_CHOICES = ("cutoff_maxwellian", "half_maxwellian")
INITIAL_CHOICES = ("zero", "maxwellian", "boundary")


@dataclass
class RunConfig:
    values: dict
    source: str | None = None
    explicit: set = field(default_factory=set)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def with_overrides(self, **changes) -> "RunConfig":
        vals = dict(self.values)
        vals.update({k: v for k, v in changes.items() if v is not None})
        cfg = RunConfig(vals, self.source, self.explicit | {k for k, v in changes.items() if v is not None})
        problems = validate(cfg.values)
        if problems:
            raise ConfigError(problems)
        return cfg

    def collision_params(self):
        from .phase_space import CollisionParams

        return CollisionParams(self.gamma, self.alpha, self.a, self.epsilon, self.kernel_model)

    def grid(self):
        from .phase_space import GridSpec, build_grid

        return build_grid(GridSpec(self.n_x, self.n_v, self.n_I, self.v_max, self.I_max, self.I_rule,
                                   self.I_scale))

    def quadrature(self):
        from .collision import QuadratureSpec

        return QuadratureSpec(self.quad_mode, self.n_samples, self.seed, None, tuple(self.orders))

    def boundary_params(self) -> dict:
        return {side: {"n": self.values[f"{side}_n"], "T": self.values[f"{side}_T"],
                       "u": self.values[f"{side}_u"], "beta": self.values[f"{side}_beta"]}
                for side in ("left", "right")}

    def canonical(self) -> str:
        """Sorted key = value text; the basis of run digests."""
        lines = []
        for key in sorted(self.values):
            val = self.values[key]
            if isinstance(val, tuple):
                val = ",".join(repr(v) for v in val)
            lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.values.items()}


def validate(vals: dict) -> list:
    problems = []
    from .phase_space import CollisionParams

    try:
        CollisionParams(vals["gamma"], vals["alpha"], vals["a"], vals["epsilon"], vals["kernel_model"])
    except ValueError as exc:
        problems += str(exc).split("; ")
    for side in ("left", "right"):
        n, T, beta = vals[f"{side}_n"], vals[f"{side}_T"], vals[f"{side}_beta"]
        if n < 0:
            problems.append(f"{side}_n: density must be non-negative")
        if T <= 0:
            problems.append(f"{side}_T: temperature must be positive")
        elif n > 0 and vals["a"] * T >= 1:
            problems.append(f"{side}_T: weight admissibility requires a*T < 1 (a={vals['a']}, T={T})")
        if beta < 0:
            problems.append(f"{side}_beta: must be non-negative")
        if len(vals[f"{side}_u"]) != 3:
            problems.append(f"{side}_u: drift needs three components")
    if vals["boundary"] not in BOUNDARY_CHOICES:
        problems.append(f"boundary: expected one of {BOUNDARY_CHOICES}, got {vals['boundary']!r}")
    elif vals["boundary"] == "half_maxwellian" and (vals["left_beta"] or vals["right_beta"]):
        problems.append("boundary: half_maxwellian needs left_beta = right_beta = 0")
    if vals["initial"] not in INITIAL_CHOICES:
        problems.append(f"initial: expected one of {INITIAL_CHOICES}, got {vals['initial']!r}")
    if vals["quad_mode"] not in ("monte_carlo", "tensor"):
        problems.append(f"quad_mode: expected monte_carlo or tensor, got {vals['quad_mode']!r}")
    if len(vals["orders"]) != 6 or min(vals["orders"], default=0) < 1:
        problems.append("orders: six positive rule sizes required")
    for key in ("n_x", "n_I", "n_samples", "max_iter", "contraction_seeds", "verify_samples"):
        if vals[key] < 1:
            problems.append(f"{key}: must be at least 1")
    if vals["n_x"] < 2:
        problems.append("n_x: at least two x nodes are needed")
    n_v = vals["n_v"] if isinstance(vals["n_v"], tuple) else (vals["n_v"],)
    v_max = vals["v_max"] if isinstance(vals["v_max"], tuple) else (vals["v_max"],)
    if len(n_v) not in (1, 3) or min(n_v) < 2:
        problems.append("n_v: a scalar or triple of sizes >= 2")
    elif n_v[0] % 2:
        problems.append("n_v: the v1 axis needs an even node count so that v1 = 0 is not a node")
    if len(v_max) not in (1, 3) or min(v_max) <= 0:
        problems.append("v_max: a positive scalar or triple")
    if vals["I_rule"] not in ("laguerre", "legendre", "midpoint"):
        problems.append(f"I_rule: unknown rule {vals['I_rule']!r}")
    if vals["tol"] < 0:
        problems.append("tol: must be non-negative")
    if not vals["eps_list"]:
        problems.append("eps_list: at least one epsilon is required")
    elif min(vals["eps_list"]) <= 0:
        problems.append("eps_list: values must be positive")
    return problems


def parse_text(text: str, source: str | None = None) -> RunConfig:
    vals = {k: spec[1] for k, spec in SCHEMA.items()}
    explicit, problems = set(), []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in explicit:
            problems.append(f"line {lineno}: duplicate key {key!r}")
            continue
        try:
            vals[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            problems.append(f"line {lineno}: bad value for {key!r}: {exc}")
            continue
        explicit.add(key)
    if problems:
        raise ConfigError(problems)
    problems = validate(vals)
    if problems:
        raise ConfigError(problems)
    return RunConfig(vals, source, explicit)


def parse_config(path=None) -> RunConfig:
    """Validated RunConfig from a file (defaults when ``path`` is None)."""
    if path is None:
        return parse_text("", None)
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    return parse_text(path.read_text(), str(path))


def schema_text() -> str:
    """The documented schema, as a commented default config."""
    lines = []
    for key, (_, default, help_) in SCHEMA.items():
        if isinstance(default, tuple):
            default = ", ".join(str(d) for d in default)
        lines.append(f"# {help_}\n{key} = {default}")
    return "\n".join(lines) + "\n"
