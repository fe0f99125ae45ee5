import numpy as np
import pytest

from faedo import (
    ExternalPotentialSpec,
    GalerkinProblem,
    HartreeKernel,
    PropagatorConfig,
    SpatialDomain,
    TimeGrid,
    build_basis,
)

# acceptance outcomes, filled by tests/test_acceptance.py and echoed at the end of the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])


@pytest.fixture(scope="session")
def domain():
    return SpatialDomain(1.0, 128)


@pytest.fixture(scope="session")
def grid():
    return TimeGrid(0.5, 8)


@pytest.fixture(scope="session")
def small_problem(domain, grid):
    """Cheap nonlinear problem: n=4, driven well, lambda=0.1."""
    return GalerkinProblem(
        build_basis(domain, 4),
        grid,
        ExternalPotentialSpec("driven-well", 10.0, 0.5, 4 * np.pi),
        HartreeKernel(0.1, 1.0, 0.1),
        PropagatorConfig(substeps=2),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
