"""States, energies, ergotropy, passive and (inverse) thermal states."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import Hamiltonian
from .spectral import Spectrum, diagonalize, eigh

NEG_EIG_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Pure amplitude vector or density matrix in the site basis."""

    vector: np.ndarray | None = None
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if (self.vector is None) == (self.matrix is None):
            raise ValueError("provide exactly one of vector or matrix")
        if self.vector is not None:
            v = np.array(self.vector, dtype=complex)
            if v.ndim != 1 or v.size == 0:
                raise ValueError("state vector must be one-dimensional")
            if abs(np.linalg.norm(v) - 1) > 1e-12:
                raise ValueError(f"state vector not normalized (norm {np.linalg.norm(v)!r})")
            v.setflags(write=False)
            object.__setattr__(self, "vector", v)
        else:
            rho = np.array(self.matrix, dtype=complex)
            if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
                raise ValueError("density matrix must be square")
            if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(rho).real - 1) > 1e-10:
                raise ValueError(f"density matrix trace is {np.trace(rho).real!r}, expected 1")
            if np.min(np.linalg.eigvalsh(rho)) < -NEG_EIG_TOL:
                raise ValueError("density matrix is not positive semidefinite")
            rho.setflags(write=False)
            object.__setattr__(self, "matrix", rho)

    @classmethod
    def pure(cls, vector) -> QuantumState:
        return cls(vector=vector)

    @classmethod
    def mixed(cls, matrix) -> QuantumState:
        return cls(matrix=matrix)

    @property
    def is_pure(self) -> bool:
        return self.vector is not None

    @property
    def dim(self) -> int:
        return (self.vector if self.is_pure else self.matrix).shape[0]

    @property
    def density(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.vector, self.vector.conj())
        return self.matrix


def localized_state(n: int, m: int) -> QuantumState:
    if not 0 <= m < n:
        raise ValueError(f"site {m} out of range for n={n}")
    v = np.zeros(n, dtype=complex)
    v[m] = 1
    return QuantumState.pure(v)


def eigen_state(spectrum: Spectrum, l: int) -> QuantumState:
    if not 0 <= l < spectrum.n:
        raise ValueError(f"level {l} out of range for n={spectrum.n}")
    v = spectrum.eigenvectors[:, l]
    return QuantumState.pure(v / np.linalg.norm(v))


def uniform_rim_state(n: int) -> QuantumState:
    """Equal superposition of vertices 1..n-1 (the wheel rim)."""
    if n < 2:
        raise ValueError("uniform rim state needs n >= 2")
    v = np.full(n, 1 / np.sqrt(n - 1), dtype=complex)
    v[0] = 0
    return QuantumState.pure(v)


def _spectrum(h) -> Spectrum:
    if isinstance(h, Spectrum):
        return h
    if isinstance(h, Hamiltonian):
        return h.spectrum
    return diagonalize(np.asarray(h, dtype=complex))


def _as_state(state) -> QuantumState:
    if isinstance(state, QuantumState):
        return state
    a = np.asarray(state, dtype=complex)
    return QuantumState.pure(a) if a.ndim == 1 else QuantumState.mixed(a)


def _check_dim(state: QuantumState, n: int):
    if state.dim != n:
        raise ValueError(f"state dimension {state.dim} does not match Hamiltonian dimension {n}")


def energy_populations(state, h) -> np.ndarray:
    """Occupation of each energy level, <phi_l|rho|phi_l>."""
    st, spec = _as_state(state), _spectrum(h)
    _check_dim(st, spec.n)
    v = spec.eigenvectors
    if st.is_pure:
        return np.abs(v.conj().T @ st.vector) ** 2
    return np.real(np.einsum("il,ij,jl->l", v.conj(), st.matrix, v))


def energy(state, h) -> float:
    """Tr(H rho)."""
    st = _as_state(state)
    if isinstance(h, Spectrum):
        return float(energy_populations(st, h) @ h.eigenvalues)
    m = h.matrix if isinstance(h, Hamiltonian) else np.asarray(h, dtype=complex)
    _check_dim(st, m.shape[0])
    if st.is_pure:
        val = st.vector.conj() @ m @ st.vector
    else:
        val = np.trace(m @ st.matrix)
    scale = max(float(np.max(np.abs(m), initial=0.0)), 1.0)
    if abs(val.imag) > 1e-10 * scale:
        raise ValueError("energy has a non-negligible imaginary part")
    return float(val.real)


def _clean_eigenvalues(p: np.ndarray) -> np.ndarray:
    if np.min(p) < -NEG_EIG_TOL:
        raise ValueError(f"density matrix has eigenvalue {np.min(p)!r} < -{NEG_EIG_TOL}")
    p = np.where(p < 0, 0.0, p)
    return p / p.sum()


def density_eigen(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a density matrix, populations descending."""
    s = eigh(rho)
    return s.eigenvalues[::-1].copy(), s.eigenvectors[:, ::-1].copy()


def passive_energy(state, h) -> float:
    st, spec = _as_state(state), _spectrum(h)
    _check_dim(st, spec.n)
    if st.is_pure:
        return float(spec.eigenvalues[0])
    p, _ = density_eigen(st.matrix)
    return float(_clean_eigenvalues(p) @ spec.eigenvalues)


def ergotropy(state, h) -> float:
    """Maximal work extractable by a unitary: E(rho) - E(passive(rho)).

    Density eigenvalues sorted descending are paired with ascending energies.
    Results within 1e-9 below zero are clamped to zero.
    """
    st, spec = _as_state(state), _spectrum(h)
    w = energy(st, spec) - passive_energy(st, spec)
    if w < -NEG_EIG_TOL:
        raise ValueError(f"negative ergotropy {w!r}; inconsistent input")
    return max(w, 0.0)


def ergotropy_from_overlaps(state, h) -> float:
    """Cross-check: sum_jk p_j E_k (|<eta_j|phi_k>|^2 - delta_jk).

    Uses the descending-population convention for eta_j.
    """
    st, spec = _as_state(state), _spectrum(h)
    _check_dim(st, spec.n)
    p, eta = density_eigen(st.density)
    p = _clean_eigenvalues(p)
    overlaps = np.abs(eta.conj().T @ spec.eigenvectors) ** 2
    return float(p @ (overlaps - np.eye(spec.n)) @ spec.eigenvalues)


def passive_state(state, h) -> QuantumState:
    """Same spectrum as ``state``, populations decreasing with energy."""
    st, spec = _as_state(state), _spectrum(h)
    _check_dim(st, spec.n)
    if st.is_pure:
        p = np.zeros(spec.n)
        p[0] = 1.0
    else:
        p = _clean_eigenvalues(density_eigen(st.matrix)[0])
    v = spec.eigenvectors
    return QuantumState.mixed((v * p) @ v.conj().T)


def _ground_mixture(spec: Spectrum) -> np.ndarray:
    p = np.zeros(spec.n)
    ground = list(spec.degeneracy_groups[0])
    p[ground] = 1.0 / len(ground)
    return p


def thermal_populations(spec: Spectrum, beta: float) -> np.ndarray:
    if not beta >= 0:
        raise ValueError(f"beta must be >= 0, got {beta!r}")
    if math.isinf(beta):
        return _ground_mixture(spec)
    e = spec.eigenvalues
    w = np.exp(-beta * (e - e.min()))
    return w / w.sum()


def inverse_thermal_populations(spec: Spectrum, beta: float) -> np.ndarray:
    """Level l receives the Gibbs weight of level N-1-l."""
    return thermal_populations(spec, beta)[::-1].copy()


def thermal_state(h, beta: float) -> QuantumState:
    spec = _spectrum(h)
    v = spec.eigenvectors
    return QuantumState.mixed((v * thermal_populations(spec, beta)) @ v.conj().T)


def inverse_thermal_state(h, beta: float) -> QuantumState:
    """Gibbs populations reversed across the spectrum.

    At beta = inf this is the reversal of the ground mixture, so a
    nondegenerate ground level maps onto the top projector.
    """
    spec = _spectrum(h)
    v = spec.eigenvectors
    return QuantumState.mixed((v * inverse_thermal_populations(spec, beta)) @ v.conj().T)


def thermal_inverse_ergotropy_closed_form(kind: str, n: int, beta: float, coupling_j: float = 1.0) -> float:
    """Ergotropy of the inverse thermal state for ring3, ring4 and complete cells.

    Written in overflow-free form; beta = inf returns the bandwidth.
    """
    if not beta >= 0:
        raise ValueError(f"beta must be >= 0, got {beta!r}")
    j = coupling_j
    kind = kind.lower()
    if kind == "ring":
        kind = f"ring{n}"
    if kind == "ring3":
        if n != 3:
            raise ValueError("ring3 closed form needs n = 3")
        x = math.exp(-3 * beta * j)
        return 3 * j * (1 - x) / (1 + 2 * x)
    if kind == "ring4":
        if n != 4:
            raise ValueError("ring4 closed form needs n = 4")
        return 4 * j * math.tanh(beta * j)
    if kind == "complete":
        if n < 2:
            raise ValueError("complete cell needs n >= 2")
        x = math.exp(-beta * n * j)
        return n * j * (1 - x) / (1 + (n - 1) * x)
    raise ValueError(f"no closed form for kind={kind!r}, n={n}")


def bandwidth(h) -> float:
    """E_max - E_min."""
    spec = _spectrum(h)
    return float(spec.eigenvalues[-1] - spec.eigenvalues[0])


def battery_ergotropy(m_cells: int, w_cell: float) -> float:
    """Ergotropy of M identical, uncorrelated cells."""
    if int(m_cells) != m_cells or m_cells < 1:
        raise ValueError(f"m_cells must be a positive integer, got {m_cells!r}")
    return int(m_cells) * float(w_cell)
