import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from snse_galerkin.nonlinear import BilinearWorkspace
from snse_galerkin.spectral import build_dirichlet_basis, build_periodic_basis

settings.register_profile("repo", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def torus32():
    return build_periodic_basis(2 * np.pi, 32)


@pytest.fixture(scope="session")
def torus_ws(torus32):
    return BilinearWorkspace(torus32)


@pytest.fixture(scope="session")
def square16():
    # coarse no-slip basis for fast unit tests
    return build_dirichlet_basis(1.0, 16, 8)


@pytest.fixture(scope="session")
def square_ws(square16):
    return BilinearWorkspace(square16)


@pytest.fixture(scope="session")
def basis_cache(tmp_path_factory):
    path = os.environ.get("SNSE_BASIS_CACHE")
    return path or str(tmp_path_factory.mktemp("basis-cache"))


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance_results():
    return _ACCEPTANCE


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criteria (slow)")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
