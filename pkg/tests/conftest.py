import warnings

import pytest
from hypothesis import settings

from polyslab import CollisionParams, GridSpec, build_grid

# first calls pay for numba compilation
settings.register_profile("polyslab", deadline=None)
settings.load_profile("polyslab")


@pytest.fixture(autouse=True)
def _quiet_boundary_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*beta=.*< 1")
        yield


@pytest.fixture
def params():
    return CollisionParams(gamma=1.0, alpha=0.0, weight_a=0.5, epsilon=0.05)


@pytest.fixture
def small_grid():
    return build_grid(GridSpec(n_x=5, n_v=8, n_I=4, v_max=6.0))


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """record(number, passed, detail): one summary line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
