import numpy as np
import pytest
from hypothesis import settings

from rsp.bloch import I2, PAULI, TwoQubitState

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def state_from_rho(rho):
    P = (I2,) + PAULI
    x = [np.trace(rho @ np.kron(P[i], I2)).real for i in range(1, 4)]
    y = [np.trace(rho @ np.kron(I2, P[i])).real for i in range(1, 4)]
    T = [[np.trace(rho @ np.kron(P[i], P[j])).real for j in range(1, 4)] for i in range(1, 4)]
    return TwoQubitState(x, y, T)


def random_rho(rng, rank=None):
    rank = rank or int(rng.integers(1, 5))
    A = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real


def random_state(rng, rank=None):
    return state_from_rho(random_rho(rng, rank))


def random_bell_t(rng):
    """Correlation diagonal of a random Bell-diagonal state (a point of the tetrahedron)."""
    corners = np.array([[-1, -1, -1], [-1, 1, 1], [1, -1, 1], [1, 1, -1]], dtype=float)
    return rng.dirichlet(np.ones(4)) @ corners


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
