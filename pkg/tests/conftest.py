import numpy as np
import pytest

from relaxals.factor import FactorPair


def rel(a, b):
    """Relative Frobenius distance of ``a`` from ``b``."""
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b)


def random_pair(rng, m, n, k):
    return FactorPair(rng.standard_normal((m, k)), rng.standard_normal((n, k)))


def well_conditioned(rng, k, cond=10.0):
    """Random k x k matrix with condition number ``cond``."""
    P, _ = np.linalg.qr(rng.standard_normal((k, k)))
    Q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    return (P * np.geomspace(1.0, 1.0 / cond, k)) @ Q.T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Print and record one ``[PASS]/[FAIL] criterion N: detail`` line."""

    def emit(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
