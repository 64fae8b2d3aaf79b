import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from aimspa.model import AimParams, sample_params

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def single_mode():
    """One spinful orbital with level 1 eV and no bath."""
    return AimParams(h=np.array([[1.0]]), U=np.array([2.0]), V=np.zeros((1, 0)), eps=np.zeros(0))


@pytest.fixture(params=[(1, 1), (1, 2)], ids=["Nq4", "Nq6"])
def small_params(request):
    n_imp, n_bath = request.param
    return sample_params(3, n_imp, n_bath)
