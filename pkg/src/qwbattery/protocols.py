"""Discharge unitaries and the piecewise potentials that generate them."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from .graphs import Hamiltonian, Topology, TopologySpec, build_hamiltonian
from .spectral import Spectrum, eigh, evolution_operator, krylov_reduce
from .thermo import QuantumState, _as_state, density_eigen, energy, localized_state

log = logging.getLogger(__name__)

UNITARY_TOL = 1e-10


class Strategy(str, enum.Enum):
    ERG = "erg"
    FREE = "free"
    ZERO = "zero"
    PERMUTATION = "permutation"
    PURE_PROJECTOR = "pure_projector"
    MIXED_OPTIMAL = "mixed_optimal"


class Flavor(str, enum.Enum):
    SPIN_CHAIN = "spin_chain"
    ANTIDIAGONAL = "antidiagonal"
    MATRIX_LOG = "matrix_log"
    LOCALIZED_SEARCH = "localized_search"


def phase_fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Phase-insensitive operator overlap |tr(A^dag B)| / N."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(abs(np.trace(a.conj().T @ b)) / a.shape[0])


@dataclass(frozen=True, eq=False)
class DischargeUnitary:
    matrix: np.ndarray
    strategy: Strategy
    built_for: str = ""

    def __post_init__(self):
        u = np.array(self.matrix, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ValueError("unitary must be square")
        if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > UNITARY_TOL:
            raise ValueError("matrix is not unitary")
        u.setflags(write=False)
        object.__setattr__(self, "matrix", u)
        object.__setattr__(self, "strategy", Strategy(self.strategy))

    def apply(self, state) -> QuantumState:
        st = _as_state(state)
        u = self.matrix
        if st.is_pure:
            return QuantumState.pure(u @ st.vector)
        rho = u @ st.matrix @ u.conj().T
        return QuantumState.mixed(0.5 * (rho + rho.conj().T))

    def work(self, state, h) -> float:
        """E(rho) - E(U rho U^dag)."""
        st = _as_state(state)
        return energy(st, h) - energy(self.apply(st), h)


@dataclass(frozen=True, eq=False)
class PiecewisePotentialPlan:
    """H_tot = H outside [0, t_star] and h_middle inside it."""

    h_middle: np.ndarray
    t_star: float
    flavor: Flavor
    h_cell: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        hm = np.array(self.h_middle, dtype=complex)
        if np.max(np.abs(hm - hm.conj().T), initial=0.0) > 1e-10 * max(np.max(np.abs(hm), initial=0.0), 1.0):
            raise ValueError("h_middle is not Hermitian")
        if not self.t_star > 0:
            raise ValueError(f"t_star must be positive, got {self.t_star!r}")
        hm = 0.5 * (hm + hm.conj().T)
        hm.setflags(write=False)
        object.__setattr__(self, "h_middle", hm)
        object.__setattr__(self, "flavor", Flavor(self.flavor))

    def propagator(self, t: float | None = None) -> np.ndarray:
        """exp(-i h_middle t), default t = t_star."""
        t = self.t_star if t is None else t
        return evolution_operator(eigh(self.h_middle), t)

    @property
    def potential(self) -> np.ndarray:
        """V = h_middle - H during the active window."""
        if self.h_cell is None:
            raise ValueError("plan has no cell Hamiltonian attached")
        return self.h_middle - self.h_cell

    def h_tot(self, t: float) -> np.ndarray:
        if self.h_cell is None:
            raise ValueError("plan has no cell Hamiltonian attached")
        return self.h_middle if 0 <= t <= self.t_star else self.h_cell


def _spectrum_of(h) -> Spectrum:
    return h if isinstance(h, Spectrum) else h.spectrum if isinstance(h, Hamiltonian) else eigh(h)


def complete_basis(first: np.ndarray, residual_tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis whose first column is ``first``.

    Remaining columns come from Gram-Schmidt over the canonical basis in
    index order, skipping near-parallel candidates.
    """
    n = first.size
    cols = [first / np.linalg.norm(first)]
    for k in range(n):
        if len(cols) == n:
            break
        cand = np.zeros(n, dtype=complex)
        cand[k] = 1
        for _ in range(2):
            for c in cols:
                cand = cand - (c.conj() @ cand) * c
        norm = np.linalg.norm(cand)
        if norm < residual_tol:
            continue
        cols.append(cand / norm)
    return np.column_stack(cols)


def pure_discharge_unitary(psi0, spectrum) -> DischargeUnitary:
    """U = sum_l |phi_l><psi_l| with psi_0 the charged state."""
    spec = _spectrum_of(spectrum)
    st = _as_state(psi0)
    if not st.is_pure:
        raise ValueError("pure_discharge_unitary needs a pure state")
    if st.dim != spec.n:
        raise ValueError("state and spectrum dimensions differ")
    basis = complete_basis(st.vector)
    u = spec.eigenvectors @ basis.conj().T
    return DischargeUnitary(u, Strategy.PURE_PROJECTOR, "pure state")


def mixed_optimal_unitary(rho, spectrum) -> DischargeUnitary:
    """U = sum_l |phi_l><eta_l| with eta_l sorted by decreasing population."""
    spec = _spectrum_of(spectrum)
    st = _as_state(rho)
    if st.dim != spec.n:
        raise ValueError("state and spectrum dimensions differ")
    _, eta = density_eigen(st.density)
    u = spec.eigenvectors @ eta.conj().T
    return DischargeUnitary(u, Strategy.MIXED_OPTIMAL, "mixed state")


def optimal_unitary(state, spectrum, strategy: Strategy = Strategy.ERG, built_for: str = "") -> DischargeUnitary:
    """Ergotropy-saturating unitary for ``state``, tagged with ``strategy``."""
    st = _as_state(state)
    u = pure_discharge_unitary(st, spectrum) if st.is_pure else mixed_optimal_unitary(st, spectrum)
    return DischargeUnitary(u.matrix, strategy, built_for)


def permutation_unitary(spectrum) -> DischargeUnitary:
    """Eigenbasis reversal sum_l |phi_l><phi_{N-1-l}|."""
    spec = _spectrum_of(spectrum)
    v = spec.eigenvectors
    u = v @ v[:, ::-1].conj().T
    return DischargeUnitary(u, Strategy.PERMUTATION, "eigenbasis reversal")


def matrix_log_potential(u, t_star: float) -> PiecewisePotentialPlan:
    """Hermitian H with exp(-i H t_star) = U, principal branch.

    Phases live in (-pi, pi]; eigenvalue -1 gets phase +pi.
    """
    if not t_star > 0:
        raise ValueError(f"t_star must be positive, got {t_star!r}")
    mat = u.matrix if isinstance(u, DischargeUnitary) else np.asarray(u, dtype=complex)
    if np.max(np.abs(mat.conj().T @ mat - np.eye(mat.shape[0]))) > UNITARY_TOL:
        raise ValueError("matrix is not unitary")
    # Complex Schur form of a normal matrix is diagonal with unitary Z.
    t, z = scipy.linalg.schur(mat, output="complex")
    theta = np.angle(np.diag(t))
    theta = np.where(theta <= -math.pi + 1e-12, math.pi, theta)
    h = -(z * theta) @ z.conj().T / t_star
    return PiecewisePotentialPlan(h, t_star, Flavor.MATRIX_LOG)


def spin_chain_protocol(spectrum, xi: float) -> PiecewisePotentialPlan:
    """Couplings (xi/2) sqrt(l (N-l)) between phi_{l-1} and phi_l, t_star = pi/xi.

    A spin-N/2 rotation by pi about x, which reverses the eigenbasis.
    """
    if not xi > 0:
        raise ValueError(f"xi must be positive, got {xi!r}")
    spec = _spectrum_of(spectrum)
    n = spec.n
    k = np.zeros((n, n))
    for l in range(1, n):
        k[l - 1, l] = k[l, l - 1] = 0.5 * xi * math.sqrt(l * (n - l))
    v = spec.eigenvectors
    h = v @ k @ v.conj().T
    return PiecewisePotentialPlan(h, math.pi / xi, Flavor.SPIN_CHAIN, h_cell=spec.reconstruct())


def antidiagonal_protocol(spectrum, chi: float) -> PiecewisePotentialPlan:
    """h = chi * P with P the eigenbasis reversal, t_star = pi/(2 chi)."""
    if not chi > 0:
        raise ValueError(f"chi must be positive, got {chi!r}")
    spec = _spectrum_of(spectrum)
    p = permutation_unitary(spec).matrix
    return PiecewisePotentialPlan(chi * p, math.pi / (2 * chi), Flavor.ANTIDIAGONAL, h_cell=spec.reconstruct())


def refine_max(f, grid: np.ndarray, values: np.ndarray, xtol: float = 1e-10) -> tuple[float, float]:
    """Golden-section refinement of max f around the best grid point."""
    k = int(np.argmax(values))
    lo = float(grid[max(k - 1, 0)])
    hi = float(grid[min(k + 1, grid.size - 1)])
    best = (float(grid[k]), float(values[k]))
    if hi <= lo:
        return best
    try:
        res = minimize_scalar(lambda x: -f(x), bracket=(lo, float(grid[k]), hi), method="golden",
                              tol=xtol / max(abs(float(grid[k])), 1.0))
    except ValueError:
        # Flat or edge maximum: no valid bracket, fall back to a bounded search.
        res = minimize_scalar(lambda x: -f(x), bounds=(lo, hi), method="bounded", options={"xatol": xtol})
    if lo <= res.x <= hi and -res.fun >= best[1]:
        return float(res.x), float(-res.fun)
    return best


@dataclass(frozen=True)
class LocalizedSearchResult:
    plan: PiecewisePotentialPlan
    t_star: float
    fidelity: float
    ground_fidelity: float
    reduced_estimate: float


def localized_search_discharge(kind: str | Topology, n: int, coupling_j: float = 1.0, site: int | None = None,
                               t_max: float | None = None, samples: int = 4001) -> LocalizedSearchResult:
    """Discharge a localized state with a single-site potential.

    V = -N J |x><x| (complete) or -4 J |x><x| (wheel, x the center vertex).
    The time is the maximizer of the fidelity with the uniform state over
    (0, t_max], refined by a bounded scalar search.
    """
    kind = Topology(kind)
    if kind not in (Topology.COMPLETE, Topology.WHEEL):
        raise ValueError("localized search is defined for complete and wheel cells")
    if n < 4:
        raise ValueError("localized search needs n >= 4")
    j = coupling_j
    h = build_hamiltonian(TopologySpec(kind, n, coupling_j=j))
    if site is None:
        site = 0
    x = localized_state(n, site).vector
    strength = n * j if kind is Topology.COMPLETE else 4 * j
    h_mid = h.matrix - strength * np.outer(x, x)
    target = np.full(n, 1 / math.sqrt(n), dtype=complex)
    ground = h.spectrum.eigenvectors[:, 0]

    # Dynamics stay in the Krylov space of the start; diagonalize it once.
    red = krylov_reduce(h_mid, x)
    rs = eigh(red.reduced_h)
    coeffs = rs.eigenvectors.conj().T[:, 0]
    modes = red.basis @ rs.eigenvectors
    target_overlaps = target.conj() @ modes

    def fid(t):
        return float(abs(target_overlaps @ (np.exp(-1j * rs.eigenvalues * t) * coeffs)) ** 2)

    t_max = 20.0 / j if t_max is None else t_max
    grid = np.linspace(t_max / samples, t_max, samples)
    phases = np.exp(-1j * np.outer(grid, rs.eigenvalues))
    values = np.abs(phases @ (target_overlaps * coeffs)) ** 2
    # Earliest peak attaining the global maximum, not a later recurrence.
    peaks = [k for k in range(values.size)
             if values[k] >= values[max(k - 1, 0)] and values[k] >= values[min(k + 1, values.size - 1)]]
    refined = [refine_max(fid, grid[max(k - 1, 0):k + 2], values[max(k - 1, 0):k + 2]) for k in peaks]
    top = max(f for _, f in refined)
    t_star, f = next((t, f) for t, f in refined if f >= top - 1e-9)
    psi = modes @ (np.exp(-1j * rs.eigenvalues * t_star) * coeffs)
    ground_f = float(abs(ground.conj() @ psi) ** 2)

    # Two-level estimate from the first Krylov pair.
    c = abs(red.reduced_h[0, 1]) if red.m > 1 else 0.0
    delta = red.reduced_h[1, 1] - red.reduced_h[0, 0] if red.m > 1 else 0.0
    estimate = math.pi / (2 * math.sqrt(c**2 + (delta / 2) ** 2)) if c > 0 else math.inf
    log.info("localized search %s n=%d: t*=%.6g (two-level estimate %.6g), fidelity %.6g",
             kind.value, n, t_star, estimate, f)
    plan = PiecewisePotentialPlan(h_mid, t_star, Flavor.LOCALIZED_SEARCH, h_cell=h.matrix,
                                  info={"site": site, "strength": strength})
    return LocalizedSearchResult(plan, t_star, f, ground_f, estimate)


def strategy_unitaries(rho_t, rho_free_t, rho_0, spectrum, free_propagator=None) -> dict[Strategy, DischargeUnitary]:
    """U_erg on rho(t), U_free on the noiseless rho_free(t), U_0 on rho(0).

    With ``free_propagator`` = exp(-iHt), U_free is taken as U_0 exp(iHt),
    which is optimal for rho_free(t) and fixes the completion freedom
    consistently with U_0.
    """
    spec = _spectrum_of(spectrum)
    u_zero = optimal_unitary(rho_0, spec, Strategy.ZERO, "rho(0)")
    if free_propagator is None:
        u_free = optimal_unitary(rho_free_t, spec, Strategy.FREE, "rho_free(t)")
    else:
        prop = np.asarray(free_propagator, dtype=complex)
        u_free = DischargeUnitary(u_zero.matrix @ prop.conj().T, Strategy.FREE, "rho_free(t)")
    return {
        Strategy.ERG: optimal_unitary(rho_t, spec, Strategy.ERG, "rho(t)"),
        Strategy.FREE: u_free,
        Strategy.ZERO: u_zero,
    }
