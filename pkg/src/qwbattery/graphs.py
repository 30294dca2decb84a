"""Hamiltonians of battery-cell topologies (ring, complete, wheel and chiral variants)."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

HERMITIAN_RTOL = 1e-12


class Topology(str, enum.Enum):
    RING = "ring"
    COMPLETE = "complete"
    WHEEL = "wheel"
    CHIRAL_RING = "chiral-ring"
    CHIRAL_COMPLETE = "chiral-complete"
    CIRCULANT = "circulant"
    CUSTOM = "custom"


_MIN_SIZE = {
    Topology.RING: 3,
    Topology.CHIRAL_RING: 3,
    Topology.WHEEL: 4,
}


def _unit_phase_equal(a: np.ndarray, b: np.ndarray, atol: float = 1e-12) -> bool:
    return bool(np.all(np.abs(np.exp(1j * a) - np.exp(1j * b)) <= atol))


@dataclass(frozen=True, eq=False)
class TopologySpec:
    """Declarative description of a battery-cell graph.

    Only the fields relevant to ``kind`` are read: ``gamma_phase`` for
    ChiralRing, ``phase_table`` for ChiralComplete, ``first_row`` for
    Circulant and ``adjacency`` for Custom.
    """

    kind: Topology
    n: int
    coupling_j: float = 1.0
    gamma_phase: float = 0.0
    phase_table: np.ndarray | None = None
    first_row: np.ndarray | None = None
    adjacency: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Topology(self.kind))
        if int(self.n) != self.n:
            raise ValueError(f"n must be an integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        minimum = _MIN_SIZE.get(self.kind, 2)
        if self.n < minimum:
            raise ValueError(f"{self.kind.value} cell needs n >= {minimum}, got {self.n}")
        if not (np.isfinite(self.coupling_j) and self.coupling_j > 0):
            raise ValueError(f"coupling_j must be a positive real, got {self.coupling_j!r}")

        if self.kind is Topology.CHIRAL_COMPLETE:
            if self.phase_table is None:
                raise ValueError("chiral-complete cell requires a phase_table")
            table = np.asarray(self.phase_table, dtype=float)
            if table.shape != (self.n, self.n):
                raise ValueError(f"phase_table must be {self.n}x{self.n}, got {table.shape}")
            off = ~np.eye(self.n, dtype=bool)
            if not _unit_phase_equal(table[off], -table.T[off]):
                raise ValueError("phase_table must be antisymmetric (gamma[m,l] = -gamma[l,m])")
            shifted = np.roll(np.roll(table, -1, axis=0), -1, axis=1)
            if not _unit_phase_equal(table[off], shifted[off]):
                raise ValueError("phase_table must satisfy gamma[m,l] = gamma[m+1,l+1] (periodic)")
            object.__setattr__(self, "phase_table", table)

        if self.kind is Topology.CIRCULANT:
            if self.first_row is None:
                raise ValueError("circulant cell requires first_row")
            row = np.asarray(self.first_row, dtype=complex)
            if row.shape != (self.n,):
                raise ValueError(f"first_row must have length {self.n}, got shape {row.shape}")
            scale = max(np.max(np.abs(row)), 1.0)
            if abs(row[0]) > HERMITIAN_RTOL * scale:
                raise ValueError("first_row must have a zero first entry")
            mirrored = np.conj(row[(-np.arange(self.n)) % self.n])
            if np.max(np.abs(row - mirrored)) > HERMITIAN_RTOL * scale:
                raise ValueError("first_row must satisfy q[n-j] = conj(q[j])")
            object.__setattr__(self, "first_row", row)

        if self.kind is Topology.CUSTOM:
            if self.adjacency is None:
                raise ValueError("custom cell requires an adjacency matrix")
            adj = np.asarray(self.adjacency, dtype=complex)
            if adj.shape != (self.n, self.n):
                raise ValueError(f"adjacency must be {self.n}x{self.n}, got {adj.shape}")
            scale = max(np.max(np.abs(adj)), 1.0)
            if np.max(np.abs(adj - adj.conj().T)) > HERMITIAN_RTOL * scale:
                raise ValueError("custom adjacency is not Hermitian")
            object.__setattr__(self, "adjacency", adj)


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """Dense Hermitian generator of a cell, tagged with its topology."""

    matrix: np.ndarray
    coupling_j: float = 1.0
    topology: TopologySpec | None = field(default=None, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"Hamiltonian must be a square matrix, got shape {m.shape}")
        scale = np.max(np.abs(m)) if m.size else 0.0
        if np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_RTOL * max(scale, 1e-300):
            raise ValueError("Hamiltonian is not Hermitian")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def spectrum(self):
        """Eigen-decomposition, closed form for circulant matrices."""
        from .spectral import diagonalize

        return diagonalize(self)

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def _ring_matrix(n: int, hop: complex) -> np.ndarray:
    h = np.zeros((n, n), dtype=complex)
    for m in range(n):
        h[m, (m + 1) % n] = hop
        h[(m + 1) % n, m] = np.conj(hop)
    return h


def build_hamiltonian(spec: TopologySpec) -> Hamiltonian:
    """Build the Hamiltonian of a cell.

    Real topologies use H = -A with A_jk = J on edges. ChiralRing puts
    -J exp(i gamma) on (m, m+1); ChiralComplete puts -J exp(i gamma[m,l]) on
    (m, l). Circulant takes ``first_row`` as the Hamiltonian's first row and
    Custom uses H = -J * adjacency. The wheel center is vertex 0.
    """
    n, j = spec.n, spec.coupling_j
    kind = spec.kind

    if kind is Topology.RING:
        h = _ring_matrix(n, -j)
    elif kind is Topology.CHIRAL_RING:
        h = _ring_matrix(n, -j * np.exp(1j * spec.gamma_phase))
    elif kind is Topology.COMPLETE:
        h = -j * (np.ones((n, n), dtype=complex) - np.eye(n))
    elif kind is Topology.CHIRAL_COMPLETE:
        h = np.zeros((n, n), dtype=complex)
        for m in range(n):
            for l in range(m):
                h[m, l] = -j * np.exp(1j * spec.phase_table[m, l])
                h[l, m] = np.conj(h[m, l])
    elif kind is Topology.WHEEL:
        h = np.zeros((n, n), dtype=complex)
        h[0, 1:] = -j
        h[1:, 0] = -j
        h[1:, 1:] = _ring_matrix(n - 1, -j)
    elif kind is Topology.CIRCULANT:
        row = spec.first_row
        h = np.array([np.roll(row, k) for k in range(n)], dtype=complex)
        for a in range(n):
            for b in range(a):
                h[a, b] = np.conj(h[b, a])
    elif kind is Topology.CUSTOM:
        h = -j * spec.adjacency
        for a in range(n):
            h[a, a] = h[a, a].real
            for b in range(a):
                h[a, b] = np.conj(h[b, a])
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown topology {kind!r}")
    return Hamiltonian(h, coupling_j=j, topology=spec)


def is_circulant(h: Hamiltonian | np.ndarray, rtol: float = 1e-12) -> tuple[bool, np.ndarray | None]:
    """Return ``(True, first_row)`` if every row is the right-shift of the previous one."""
    m = np.asarray(h, dtype=complex)
    scale = max(np.max(np.abs(m)), 1e-300)
    for k in range(1, m.shape[0]):
        if np.max(np.abs(np.roll(m[k - 1], 1) - m[k])) > rtol * scale:
            return False, None
    return True, m[0].copy()


def load_edge_list(path: str | Path) -> np.ndarray:
    """Read a weighted edge list into a Hermitian adjacency matrix.

    The first non-comment line holds the vertex count; every further line is
    ``u v re im``. Lines starting with ``#`` are ignored. Each edge also fills
    its conjugate partner.
    """
    lines = []
    for raw in Path(path).read_text().splitlines():
        text = raw.split("#", 1)[0].strip()
        if text:
            lines.append(text)
    if not lines:
        raise ValueError(f"{path}: empty edge list")
    n = int(lines[0])
    adj = np.zeros((n, n), dtype=complex)
    for lineno, text in enumerate(lines[1:], start=2):
        parts = text.split()
        if len(parts) != 4:
            raise ValueError(f"{path}: expected 'u v re im', got {text!r}")
        u, v = int(parts[0]), int(parts[1])
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"{path}: vertex out of range in {text!r}")
        w = complex(float(parts[2]), float(parts[3]))
        if u == v:
            if w.imag != 0:
                raise ValueError(f"{path}: self-loop weight must be real in {text!r}")
            adj[u, u] = w
            continue
        adj[u, v] = w
        adj[v, u] = np.conj(w)
    return adj
