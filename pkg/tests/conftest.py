from __future__ import annotations

import numpy as np
import pytest

from qwbattery.graphs import TopologySpec, build_hamiltonian


def haar_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    """QR of a complex Ginibre matrix with the phase fix on R's diagonal."""
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density(rng: np.random.Generator, n: int, rank: int | None = None) -> np.ndarray:
    rank = n if rank is None else rank
    g = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (a + a.conj().T)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def cell(kind, n, **kw):
    return build_hamiltonian(TopologySpec(kind, n, **kw))


ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
