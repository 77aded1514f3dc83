import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pgd.tensor import Operator1D, build_operator

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def diag_op():
    return build_operator("diag_linspace", 10)


@pytest.fixture
def lap_op():
    return build_operator("fd_laplacian", 8)


def random_spd(d, rng, shift=1.0):
    M = rng.standard_normal((d, d))
    S = M @ M.T + shift * np.eye(d)
    return Operator1D(0.5 * (S + S.T))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
