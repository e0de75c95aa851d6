import numpy as np
import pytest

from idsm.mesh import DomainSpec, build_ellipse_mesh


@pytest.fixture(scope="session")
def small_mesh():
    """Ellipse mesh with a few hundred nodes, for dense oracles."""
    return build_ellipse_mesh(DomainSpec(1.0, 0.8, 0.1))


@pytest.fixture(scope="session")
def medium_mesh():
    return build_ellipse_mesh(DomainSpec(1.0, 0.8, 0.06))


@pytest.fixture(scope="session")
def disk_mesh():
    return build_ellipse_mesh(DomainSpec(1.0, 1.0, 0.05))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
