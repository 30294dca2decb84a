"""Eigen-decompositions (cyclic Jacobi, circulant closed form) and Krylov reduction."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .graphs import Hamiltonian, is_circulant

OFF_DIAG_RTOL = 1e-12
DEGENERACY_RTOL = 1e-9


class ConvergenceError(RuntimeError):
    """Jacobi sweeps exhausted the rotation budget."""


def _as_matrix(h) -> np.ndarray:
    if isinstance(h, Hamiltonian):
        return h.matrix
    return np.asarray(h, dtype=complex)


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Parallel ordering: n-1 rounds of n/2 disjoint pairs (circle method).

    Odd ``n`` gets a dummy index ``n``; pairs touching it are dropped.
    """
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p, q = [], []
        for k in range(m // 2):
            a, b = players[k], players[m - 1 - k]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=int), np.array(q, dtype=int)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _off_norm(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    mask = ~np.eye(n, dtype=bool)
    return np.sqrt(np.sum(np.abs(a[..., mask]) ** 2, axis=-1))


def jacobi_eigh(matrices: np.ndarray, max_rotations: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigensolver for a stack of Hermitian matrices.

    Accepts shape ``(..., n, n)`` and returns unsorted eigenvalues and
    eigenvector columns. Each stack element stops rotating once its
    off-diagonal Frobenius norm drops below 1e-12 of its own norm, so results
    do not depend on what else is in the batch.
    """
    a = np.array(matrices, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    batch_shape, n = a.shape[:-2], a.shape[-1]
    a = a.reshape((-1, n, n))
    a = 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))
    v = np.broadcast_to(np.eye(n, dtype=complex), a.shape).copy()
    if n == 1:
        return a[:, 0, 0].real.reshape(batch_shape + (1,)), v.reshape(batch_shape + (1, 1))

    threshold = OFF_DIAG_RTOL * np.linalg.norm(a, axis=(-2, -1))
    cap = 100 * n * n if max_rotations is None else max_rotations
    rounds = _round_robin(n)
    rotations = 0
    idx = np.arange(a.shape[0])
    while True:
        active = _off_norm(a) > threshold
        if not active.any():
            break
        if rotations >= cap:
            raise ConvergenceError(f"Jacobi did not converge within {cap} rotations")
        for p, q in rounds:
            app = a[:, p, p].real
            aqq = a[:, q, q].real
            z = a[:, p, q]
            r = np.abs(z)
            e = np.where(r > 0, np.conj(z) / np.where(r > 0, r, 1.0), 1.0)
            diff = app - aqq
            sgn = np.where(diff >= 0, 1.0, -1.0)
            denom = 0.5 * np.abs(diff) + np.sqrt(0.25 * diff**2 + r**2)
            t = np.where(denom > 0, -sgn * r / np.where(denom > 0, denom, 1.0), 0.0)
            c = 1.0 / np.sqrt(1.0 + t**2)
            s = t * c
            still = active[:, None]
            c = np.where(still, c, 1.0)
            s = np.where(still, s, 0.0)
            e = np.where(still, e, 1.0)

            g = np.broadcast_to(np.eye(n, dtype=complex), a.shape).copy()
            bi = idx[:, None]
            g[bi, p, p] = c
            g[bi, p, q] = s
            g[bi, q, p] = -s * e
            g[bi, q, q] = c * e
            a = np.conj(np.swapaxes(g, -1, -2)) @ a @ g
            v = v @ g
            zero = np.where(still, 0.0, a[bi, p, q])
            a[bi, p, q] = zero
            a[bi, q, p] = np.conj(zero)
            rotations += len(p)

    w = np.real(np.diagonal(a, axis1=-2, axis2=-1)).copy()
    return w.reshape(batch_shape + (n,)), v.reshape(batch_shape + (n, n))


def _group(eigenvalues: np.ndarray, tol: float) -> tuple[tuple[int, ...], ...]:
    groups, current = [], [0]
    for k in range(1, len(eigenvalues)):
        if eigenvalues[k] - eigenvalues[k - 1] <= tol:
            current.append(k)
        else:
            groups.append(tuple(current))
            current = [k]
    groups.append(tuple(current))
    return tuple(groups)


def default_degeneracy_tol(eigenvalues: np.ndarray) -> float:
    return DEGENERACY_RTOL * float(np.max(np.abs(eigenvalues), initial=0.0))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending eigenvalues, eigenvector columns and degeneracy groups."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    degeneracy_tol: float | None = None

    def __post_init__(self):
        w = np.asarray(self.eigenvalues, dtype=float)
        v = np.asarray(self.eigenvectors, dtype=complex)
        if w.ndim != 1 or v.shape != (w.size, w.size):
            raise ValueError("eigenvectors must be an N x N matrix matching N eigenvalues")
        if np.any(np.diff(w) < 0):
            raise ValueError("eigenvalues must be sorted ascending")
        tol = default_degeneracy_tol(w) if self.degeneracy_tol is None else float(self.degeneracy_tol)
        if tol < 0:
            raise ValueError("degeneracy_tol must be non-negative")
        w.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "eigenvalues", w)
        object.__setattr__(self, "eigenvectors", v)
        object.__setattr__(self, "degeneracy_tol", tol)

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @cached_property
    def degeneracy_groups(self) -> tuple[tuple[int, ...], ...]:
        return _group(self.eigenvalues, self.degeneracy_tol)

    @cached_property
    def group_of(self) -> np.ndarray:
        """Group label of every level."""
        labels = np.empty(self.n, dtype=int)
        for g, members in enumerate(self.degeneracy_groups):
            labels[list(members)] = g
        return labels

    def projector(self, group: int) -> np.ndarray:
        cols = self.eigenvectors[:, list(self.degeneracy_groups[group])]
        return cols @ cols.conj().T

    def projectors(self) -> list[np.ndarray]:
        return [self.projector(g) for g in range(len(self.degeneracy_groups))]

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    def to_energy_basis(self, rho: np.ndarray) -> np.ndarray:
        v = self.eigenvectors
        return v.conj().T @ rho @ v

    def from_energy_basis(self, rho: np.ndarray) -> np.ndarray:
        v = self.eigenvectors
        return v @ rho @ v.conj().T


def eigh(h: Hamiltonian | np.ndarray, degeneracy_tol: float | None = None) -> Spectrum:
    """Dense Hermitian eigen-decomposition by cyclic Jacobi rotations."""
    m = _as_matrix(h)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(float(np.max(np.abs(m), initial=0.0)), 1e-300)
    if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-12 * scale:
        raise ValueError("matrix is not Hermitian")
    w, v = jacobi_eigh(m)
    order = np.argsort(w, kind="stable")
    return Spectrum(w[order], v[:, order], degeneracy_tol)


def eigvalsh_batch(matrices: np.ndarray) -> np.ndarray:
    """Sorted eigenvalues of a stack of Hermitian matrices."""
    w, _ = jacobi_eigh(matrices)
    return np.sort(w, axis=-1)


def circulant_spectrum(first_row, degeneracy_tol: float | None = None) -> Spectrum:
    """Closed-form spectrum of the Hermitian circulant with the given first row.

    Level l has energy sum_m q_m w^(m l) and eigenvector w^(m l)/sqrt(N) with
    w = exp(2 pi i / N). Levels are sorted ascending; inside a degenerate group
    they keep increasing Fourier index and share the group's mean energy.
    """
    q = np.asarray(first_row, dtype=complex)
    if q.ndim != 1 or q.size == 0:
        raise ValueError("first_row must be a non-empty vector")
    n = q.size
    scale = max(float(np.max(np.abs(q))), 1e-300)
    if np.max(np.abs(q - np.conj(q[(-np.arange(n)) % n]))) > 1e-12 * scale:
        raise ValueError("first_row does not define a Hermitian circulant")
    energies = n * np.fft.ifft(q)
    if np.max(np.abs(energies.imag)) > 1e-12 * max(float(np.sum(np.abs(q))), 1.0):
        raise ValueError("circulant eigenvalues are not real")
    energies = energies.real

    ml = np.outer(np.arange(n), np.arange(n)) % n
    fourier = np.exp(2j * np.pi * ml / n) / np.sqrt(n)

    order = np.argsort(energies, kind="stable")
    tol = default_degeneracy_tol(energies) if degeneracy_tol is None else degeneracy_tol
    sorted_e = energies[order]
    final_order, final_e = [], []
    for members in _group(sorted_e, tol):
        idx = sorted(order[list(members)])
        final_order.extend(idx)
        final_e.extend([float(np.mean(energies[idx]))] * len(idx))
    final_order = np.array(final_order)
    return Spectrum(np.array(final_e), fourier[:, final_order], tol)


def diagonalize(h: Hamiltonian | np.ndarray) -> Spectrum:
    """Closed form when ``h`` is circulant, Jacobi otherwise."""
    circ, row = is_circulant(h)
    if circ:
        return circulant_spectrum(row)
    return eigh(h)


def evolution_operator(spectrum: Spectrum, t: float) -> np.ndarray:
    """exp(-i H t) from a spectral decomposition."""
    v = spectrum.eigenvectors
    return (v * np.exp(-1j * spectrum.eigenvalues * t)) @ v.conj().T


@dataclass(frozen=True, eq=False)
class KrylovReduction:
    """Tridiagonal generator on the Krylov space of an initial state."""

    reduced_h: np.ndarray
    basis: np.ndarray

    @property
    def m(self) -> int:
        return self.reduced_h.shape[0]

    def propagate(self, t: float) -> np.ndarray:
        """exp(-i H t) psi0 in the full space, computed in the reduced one."""
        local = evolution_operator(eigh(self.reduced_h), t)[:, 0]
        return self.basis @ local


def _sign_gauge(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v) > np.max(np.abs(v)) * (1 - 1e-9)))
    ref = v[k].real if abs(v[k].real) > 1e-14 * abs(v[k]) else v[k].imag
    return -v if ref < 0 else v


def krylov_reduce(h: Hamiltonian | np.ndarray, psi0, tol: float = 1e-10) -> KrylovReduction:
    """Lanczos reduction of ``h`` on span{H^k psi0}.

    Full re-orthogonalization keeps the basis orthonormal. Iteration stops
    when the residual falls below ``tol * ||H||_F``. Each new vector is
    sign-fixed so its first largest-magnitude component is positive, which
    keeps the reduced matrix real.
    """
    m = _as_matrix(h)
    psi = np.asarray(getattr(psi0, "vector", psi0), dtype=complex)
    if psi.shape != (m.shape[0],):
        raise ValueError(f"psi0 has shape {psi.shape}, expected ({m.shape[0]},)")
    if abs(np.linalg.norm(psi) - 1) > 1e-12:
        raise ValueError("psi0 must be normalized")
    h_norm = max(float(np.linalg.norm(m)), 1e-300)
    basis = [psi]
    while len(basis) < m.shape[0]:
        w = m @ basis[-1]
        for _ in range(2):
            for b in basis:
                w = w - (b.conj() @ w) * b
        beta = np.linalg.norm(w)
        if beta <= tol * h_norm:
            break
        basis.append(_sign_gauge(w / beta))
    b = np.column_stack(basis)
    reduced = b.conj().T @ m @ b
    if np.max(np.abs(reduced.imag)) > 1e-10 * h_norm:
        raise ValueError("reduced Hamiltonian is not real; Krylov gauge failed")
    return KrylovReduction(reduced.real, b)
