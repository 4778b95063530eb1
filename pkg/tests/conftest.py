import numpy as np
import pytest

from bubblekit import spectral


@pytest.fixture(scope="session")
def spectral_cache():
    cache = {}

    def get(dim_n):
        if dim_n not in cache:
            cache[dim_n] = spectral.solve_eigen_shooting(dim_n)
        return cache[dim_n]
    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one (criterion, passed, detail) line per acceptance criterion."""
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number, passed, detail in sorted(ACCEPTANCE):
            terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
