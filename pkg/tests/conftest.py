import numpy as np
import pytest

from lshj.geometry import BoundarySpec, Domain, Stencil, build_grid_cloud, build_knn_cloud


@pytest.fixture(scope="session")
def grid9():
    """17x17 lattice with the 3x3 stencil."""
    return build_grid_cloud((17, 17), Stencil.wide(3))


@pytest.fixture(scope="session")
def grid25():
    """17x17 lattice with the 5x5 stencil."""
    return build_grid_cloud((17, 17), Stencil.wide(5))


@pytest.fixture(scope="session")
def grid49():
    """21x21 lattice with the 7x7 stencil."""
    return build_grid_cloud((21, 21), Stencil.wide(7))


@pytest.fixture(scope="session")
def grid3d():
    """11^3 lattice with the 5^3 stencil."""
    return build_grid_cloud((11, 11, 11), Stencil.wide(5, dim=3))


@pytest.fixture(scope="session")
def knn2d():
    rng = np.random.default_rng(0)
    pts = rng.uniform(size=(400, 2))
    return build_knn_cloud(pts, 12, BoundarySpec(domain=Domain.unit_box(2)))


def interior_nodes(cloud):
    return np.flatnonzero(~cloud.boundary_mask)


# -- acceptance report ----------------------------------------------------------

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion; printed in the summary."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(number, ok, text):
        line = f"{'PASS' if ok else 'FAIL'} [{number}] {text}"
        print(line)
        lines.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
