import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from unside.paths import DirichletPath, NoiseSchedule
from unside.toys import toy_atom_dataset

settings.register_profile("unside", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("unside")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_data():
    return toy_atom_dataset()


@pytest.fixture(scope="session")
def toy_path():
    return DirichletPath(NoiseSchedule(a=3.0), K=3)


def within_sigma(estimate, expected, se, n_sigma=3.0):
    return abs(estimate - expected) <= n_sigma * se


ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
