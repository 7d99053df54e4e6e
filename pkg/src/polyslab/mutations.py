"""Deliberate implementation faults, switched on only to test the verifier.

Each name corrupts one piece of the microphysics or the solver; the
certification suite must flag every one of them.
"""

from contextlib import contextmanager

KNOWN = (
    "sigma_sign",          # v'_* gets +sqrt(RE) sigma instead of -sqrt(RE) sigma
    "wrong_jacobian",      # drops the (1-R)/(1-R') factor of the Jacobian
    "dropped_R_exponent",  # measure weight uses (1-R)^(2 alpha) instead of (1-R)^(2 alpha + 1)
    "wrong_c_alpha",       # c_alpha off by the factor 4 pi / pi
    "attenuation_sign",    # attenuation exp(+...) instead of exp(-...)
)

_active: set = set()


def active(name: str) -> bool:
    return name in _active


@contextmanager
def mutated(*names: str):
    unknown = [n for n in names if n not in KNOWN]
    if unknown:
        raise ValueError(f"unknown mutation(s): {unknown}")
    previous = set(_active)
    _active.update(names)
    try:
        yield
    finally:
        _active.clear()
        _active.update(previous)
