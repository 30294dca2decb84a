"""Bandwidth (maximal ergotropy) of chiral ring and complete cells as a function of the phases."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import Topology, TopologySpec, build_hamiltonian
from .protocols import refine_max
from .spectral import eigh, eigvalsh_batch
from .thermo import ergotropy, localized_state

SCAN_POINTS = 720


@dataclass(frozen=True, eq=False)
class ChiralScanResult:
    gamma_grid: np.ndarray
    bandwidth: np.ndarray
    argmax_gamma: float
    max_bandwidth: float


def _check_n(n: int):
    if int(n) != n or n < 3:
        raise ValueError(f"chiral cells need an integer n >= 3, got {n!r}")


def chiral_ring_energies(n: int, gamma: float, coupling_j: float = 1.0) -> np.ndarray:
    """Unsorted levels -2J cos(gamma + 2 pi l / N)."""
    _check_n(n)
    return -2 * coupling_j * np.cos(gamma + 2 * np.pi * np.arange(n) / n)


def chiral_ring_bandwidth(n: int, gamma: float, coupling_j: float = 1.0) -> float:
    e = chiral_ring_energies(n, gamma, coupling_j)
    return float(e.max() - e.min())


def chiral_ring_max(n: int, coupling_j: float = 1.0) -> tuple[float, float]:
    """Closed-form maximal bandwidth and a maximizing phase.

    Odd N: 4J sin(pi (N-1) / 2N) at gamma = pi / 2N. Even N: 4J at gamma = 0.
    """
    _check_n(n)
    if n % 2:
        return 4 * coupling_j * math.sin(math.pi * (n - 1) / (2 * n)), math.pi / (2 * n)
    return 4 * coupling_j, 0.0


def _ring_matrices(n: int, gammas: np.ndarray, coupling_j: float) -> np.ndarray:
    mats = np.zeros((gammas.size, n, n), dtype=complex)
    hop = -coupling_j * np.exp(1j * gammas)
    for m in range(n):
        mats[:, m, (m + 1) % n] = hop
        mats[:, (m + 1) % n, m] = np.conj(hop)
    return mats


def _numeric_ring_bandwidth(n: int, gamma: float, coupling_j: float) -> float:
    spec = TopologySpec(Topology.CHIRAL_RING, n, coupling_j=coupling_j, gamma_phase=gamma)
    e = eigh(build_hamiltonian(spec)).eigenvalues
    return float(e[-1] - e[0])


def _refine_periodic(f, grid: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Refine the first grid maximum of a 2 pi-periodic function, wrapping neighbours.

    Values within round-off of the maximum count as ties, so the smallest
    maximizing grid phase wins.
    """
    top = values.max()
    k = int(np.argmax(values >= top - 1e-12 * max(abs(top), 1.0)))
    step = 2 * np.pi / grid.size
    local = np.array([grid[k] - step, grid[k], grid[k] + step])
    local_vals = values[[(k - 1) % grid.size, k, (k + 1) % grid.size]]
    x, val = refine_max(f, local, local_vals)
    return float(x % (2 * np.pi)), val


def chiral_ring_scan(n: int, coupling_j: float = 1.0, samples: int = SCAN_POINTS) -> ChiralScanResult:
    """Dense-solver bandwidth on a periodic phase grid, then golden-section refinement."""
    _check_n(n)
    if samples < 3:
        raise ValueError("scan needs at least 3 samples")
    grid = 2 * np.pi * np.arange(samples) / samples
    w = eigvalsh_batch(_ring_matrices(n, grid, coupling_j))
    bw = w[:, -1] - w[:, 0]
    g_star, b_star = _refine_periodic(lambda g: _numeric_ring_bandwidth(n, g, coupling_j), grid, bw)
    return ChiralScanResult(grid, bw, g_star, b_star)


def chiral_complete_closed_form(n: int, coupling_j: float = 1.0) -> float:
    """Maximal chiral complete-cell bandwidth (magnitude).

    Odd N: 2J csc(pi/2N) sin((N-1) pi / 2N). Even N: 2J cot(pi/2N).
    """
    _check_n(n)
    x = math.pi / (2 * n)
    if n % 2:
        return 2 * coupling_j * math.sin((n - 1) * x) / math.sin(x)
    return 2 * coupling_j / math.tan(x)


def _phase_table_from_theta(theta: np.ndarray) -> np.ndarray:
    """gamma[m, l] = -theta[(l - m) mod N]; q_d = -J exp(-i theta_d)."""
    n = theta.size
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    table = -theta[idx]
    np.fill_diagonal(table, 0.0)
    return table


def complete_family_theta(n: int, s: float, half_phase: float = 0.0) -> np.ndarray:
    """One-parameter circulant-preserving family theta_d = d s - pi/2 (d < N/2).

    theta_{N-d} = -theta_d keeps the table antisymmetric; for even N the
    middle entry is ``half_phase`` (0 or pi).
    """
    theta = np.zeros(n)
    for d in range(1, (n - 1) // 2 + 1):
        theta[d] = d * s - math.pi / 2
        theta[n - d] = -theta[d]
    if n % 2 == 0:
        theta[n // 2] = half_phase
    return theta


def chiral_complete_phase_table(n: int, nu: int = 0) -> np.ndarray:
    """Phase table maximizing the chiral complete-cell bandwidth.

    Uses levels mu = nu + 1 and nu; for even N the middle coupling gets
    phase nu * pi.
    """
    _check_n(n)
    if nu not in (0, 1):
        raise ValueError("nu must be 0 or 1")
    mu = nu + 1
    theta = complete_family_theta(n, math.pi * (mu + nu) / n, half_phase=nu * math.pi)
    return _phase_table_from_theta(theta)


def chiral_complete_max(n: int, coupling_j: float = 1.0, nu: int = 0) -> tuple[float, np.ndarray]:
    """Closed-form maximum and a phase table realizing it."""
    return chiral_complete_closed_form(n, coupling_j), chiral_complete_phase_table(n, nu)


def chiral_complete_bandwidth(n: int, phase_table: np.ndarray, coupling_j: float = 1.0) -> float:
    spec = TopologySpec(Topology.CHIRAL_COMPLETE, n, coupling_j=coupling_j, phase_table=phase_table)
    e = eigh(build_hamiltonian(spec)).eigenvalues
    return float(e[-1] - e[0])


def chiral_complete_scan(n: int, coupling_j: float = 1.0, samples: int = SCAN_POINTS) -> ChiralScanResult:
    """Bandwidth along the one-parameter family ``complete_family_theta``."""
    _check_n(n)
    grid = 2 * np.pi * np.arange(samples) / samples
    mats = []
    for s in grid:
        spec = TopologySpec(Topology.CHIRAL_COMPLETE, n, coupling_j=coupling_j,
                            phase_table=_phase_table_from_theta(complete_family_theta(n, s)))
        mats.append(build_hamiltonian(spec).matrix)
    w = eigvalsh_batch(np.array(mats))
    bw = w[:, -1] - w[:, 0]

    def f(s):
        return chiral_complete_bandwidth(n, _phase_table_from_theta(complete_family_theta(n, s)), coupling_j)

    s_star, b_star = _refine_periodic(f, grid, bw)
    return ChiralScanResult(grid, bw, s_star, b_star)


@dataclass(frozen=True)
class InvarianceResult:
    w_chiral: float
    w_plain: float
    holds: bool


def localized_ergotropy_chiral_invariance(kind: str | Topology, n: int, phases=None,
                                          coupling_j: float = 1.0, site: int = 0,
                                          tol: float = 1e-9) -> InvarianceResult:
    """Compare localized-state ergotropy with and without chiral phases.

    ``phases`` is the ring phase gamma (default: the closed-form maximizer)
    or a complete-cell phase table (default: the maximizing table).
    """
    kind = Topology(kind)
    if kind in (Topology.CHIRAL_RING, Topology.RING):
        gamma = chiral_ring_max(n, coupling_j)[1] if phases is None else float(phases)
        chiral = TopologySpec(Topology.CHIRAL_RING, n, coupling_j=coupling_j, gamma_phase=gamma)
        plain = TopologySpec(Topology.RING, n, coupling_j=coupling_j)
    elif kind in (Topology.CHIRAL_COMPLETE, Topology.COMPLETE):
        table = chiral_complete_phase_table(n) if phases is None else np.asarray(phases, dtype=float)
        chiral = TopologySpec(Topology.CHIRAL_COMPLETE, n, coupling_j=coupling_j, phase_table=table)
        plain = TopologySpec(Topology.COMPLETE, n, coupling_j=coupling_j)
    else:
        raise ValueError(f"chiral invariance is defined for ring and complete cells, not {kind.value}")
    x = localized_state(n, site)
    w_c = ergotropy(x, build_hamiltonian(chiral))
    w_p = ergotropy(x, build_hamiltonian(plain))
    return InvarianceResult(w_c, w_p, abs(w_c - w_p) <= tol)
