import numpy as np
import pytest

from dephased_bath import SpinSystem, UniformPolarization, coupling_ata, prepare_initial_state


def kron_all(ops):
    out = np.array([[1.0 + 0j]])
    for o in ops:
        out = np.kron(out, o)
    return out


def embed(op, site, n):
    """Reference embedding: plain Kronecker product, site 1 leftmost."""
    eye = np.eye(2)
    return kron_all([op if k == site else eye for k in range(1, n + 1)])


@pytest.fixture
def fig1_system():
    return SpinSystem.dephased(coupling_ata(3, 1.0), 6.0)


@pytest.fixture
def fig1_state(fig1_system):
    return prepare_initial_state(fig1_system, UniformPolarization(-0.5), 0.5)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(RESULTS):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
