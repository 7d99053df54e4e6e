"""Stationary polyatomic Boltzmann equation in a slab: solver and bound certification."""

import os

# numba's default TBB layer is often too old on stock systems; fall back quietly
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .config import apply_thread_env  # noqa: E402

apply_thread_env()

from .phase_space import (  # noqa: E402
    CollisionParams,
    DistributionField,
    GridSpec,
    PhaseGrid,
    build_grid,
    maxwellian,
    maxwellian_field,
    maxwellian_nodes,
)
from .collision import Proposal, QuadratureSpec  # noqa: E402

__all__ = [
    "CollisionParams",
    "DistributionField",
    "GridSpec",
    "PhaseGrid",
    "Proposal",
    "QuadratureSpec",
    "build_grid",
    "maxwellian",
    "maxwellian_field",
    "maxwellian_nodes",
]

__version__ = "0.1.0"
