"""Open-system evolution (pure dephasing, Haken-Strobl, stochastic walk) and work trajectories."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .graphs import Hamiltonian, TopologySpec, build_hamiltonian
from .protocols import Strategy, optimal_unitary
from .spectral import Spectrum, evolution_operator
from .thermo import QuantumState, _as_state, ergotropy

TRACE_TOL = 1e-9
POSITIVITY_TOL = 1e-7
STABILITY_LIMIT = 0.1
SUPEROPERATOR_MAX_N = 16


class NoiseKind(str, enum.Enum):
    DEPHASING = "dephasing"
    HAKEN_STROBL = "haken-strobl"
    QSW = "qsw"


@dataclass(frozen=True)
class NoiseModel:
    """Decoherence channel: ``gamma`` for dephasing/Haken-Strobl, ``p`` for the stochastic walk."""

    kind: NoiseKind
    gamma: float = 0.0
    p: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.kind is NoiseKind.QSW:
            if not 0 <= self.p <= 1:
                raise ValueError(f"qsw mixing weight p must lie in [0, 1], got {self.p!r}")
        elif not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be a finite non-negative rate, got {self.gamma!r}")


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    energy: np.ndarray
    ergotropy: np.ndarray
    work: dict[str, np.ndarray] = field(default_factory=dict)
    states: np.ndarray | None = None
    trace_error: float = 0.0
    min_eigenvalue: float = 0.0


def _matrix(h) -> np.ndarray:
    return h.matrix if isinstance(h, Hamiltonian) else np.asarray(h, dtype=complex)


def _spectrum(h) -> Spectrum:
    from .spectral import diagonalize

    return h.spectrum if isinstance(h, Hamiltonian) else diagonalize(np.asarray(h, dtype=complex))


def dephasing_evolve(rho0, spectrum: Spectrum, gamma: float, t: float) -> QuantumState:
    """Closed-form pure dephasing in the energy basis.

    Coherences between levels of one degeneracy group are left untouched.
    ``t = inf`` returns the block-diagonal long-time limit.
    """
    if not t >= 0:
        raise ValueError(f"t must be >= 0, got {t!r}")
    if not gamma >= 0:
        raise ValueError(f"gamma must be >= 0, got {gamma!r}")
    st = _as_state(rho0)
    r = spectrum.to_energy_basis(st.density)
    labels = spectrum.group_of
    same = labels[:, None] == labels[None, :]
    if math.isinf(t):
        factor = np.where(same, 1.0, 0.0)
    else:
        gap = spectrum.eigenvalues[:, None] - spectrum.eigenvalues[None, :]
        gap = np.where(same, 0.0, gap)
        factor = np.exp(-1j * gap * t - 0.5 * gamma * gap**2 * t)
    rho = spectrum.from_energy_basis(r * factor)
    return QuantumState.mixed(0.5 * (rho + rho.conj().T))


def lindblad_rhs(rho: np.ndarray, h, model: NoiseModel) -> np.ndarray:
    """Right-hand side d rho / dt of the chosen master equation."""
    m = _matrix(h)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != m.shape:
        raise ValueError(f"rho shape {rho.shape} does not match H shape {m.shape}")
    comm = m @ rho - rho @ m
    if model.kind is NoiseKind.DEPHASING:
        return -1j * comm - 0.5 * model.gamma * (m @ comm - comm @ m)
    if model.kind is NoiseKind.HAKEN_STROBL:
        return -1j * comm + model.gamma * (np.diag(np.diag(rho)) - rho)
    # Stochastic walk: jumps |k><j| weighted by H_kj.
    a = np.abs(m) ** 2
    gain = np.diag(a @ np.real(np.diag(rho)))
    w = a.sum(axis=0)
    loss = 0.5 * (w[:, None] * rho + rho * w[None, :])
    return -1j * (1 - model.p) * comm + model.p * (gain - loss)


def dissipation_rate(h, model: NoiseModel) -> float:
    """Largest decay rate of the dissipator, used by the step-size guard."""
    if model.kind is NoiseKind.DEPHASING:
        e = _spectrum(h).eigenvalues
        return 0.5 * model.gamma * float(e[-1] - e[0]) ** 2
    if model.kind is NoiseKind.HAKEN_STROBL:
        return model.gamma
    a = np.abs(_matrix(h)) ** 2
    return model.p * float(a.sum(axis=0).max(initial=0.0))


def _check_grid(t_grid, dt: float) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("t_grid must be a non-empty 1-D array")
    if t[0] < 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be non-negative and strictly increasing")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    spacing = np.diff(np.concatenate([[0.0], t]))
    spacing = spacing[spacing > 0]
    if spacing.size and dt > spacing.min() * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the smallest grid spacing {spacing.min()}")
    return t


def _superoperator(h, model: NoiseModel) -> np.ndarray:
    n = _matrix(h).shape[0]
    cols = []
    for k in range(n * n):
        e = np.zeros(n * n, dtype=complex)
        e[k] = 1
        cols.append(lindblad_rhs(e.reshape(n, n), h, model).ravel())
    return np.column_stack(cols)


def _rk4_step(rho: np.ndarray, h, model: NoiseModel, step: float) -> np.ndarray:
    k1 = lindblad_rhs(rho, h, model)
    k2 = lindblad_rhs(rho + 0.5 * step * k1, h, model)
    k3 = lindblad_rhs(rho + 0.5 * step * k2, h, model)
    k4 = lindblad_rhs(rho + step * k3, h, model)
    return rho + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(rho0, h, model: NoiseModel, t_grid, dt: float = 1e-3) -> np.ndarray:
    """Classical RK4 with fixed steps landing on every grid time.

    Each grid interval is cut into equal steps no longer than ``dt``. For a
    linear generator one RK4 step is the degree-4 Taylor polynomial of
    ``step * L``; small cells precompute it on the superoperator.
    """
    t = _check_grid(t_grid, dt)
    m = _matrix(h)
    n = m.shape[0]
    rho = np.array(_as_state(rho0).density, dtype=complex)
    if rho.shape != (n, n):
        raise ValueError("rho0 dimension does not match H")
    norm_h = float(np.max(np.abs(_spectrum(h).eigenvalues)))
    if dt * (norm_h + dissipation_rate(h, model)) > STABILITY_LIMIT:
        raise ValueError(
            f"dt={dt} violates the stability guard dt*(|H| + rate) <= {STABILITY_LIMIT}"
        )
    superop = _superoperator(h, model) if n <= SUPEROPERATOR_MAX_N else None
    cache: dict[float, np.ndarray] = {}

    out = np.empty((t.size, n, n), dtype=complex)
    now = 0.0
    for i, target in enumerate(t):
        span = target - now
        if span > 0:
            steps = max(1, math.ceil(span / dt - 1e-9))
            step = span / steps
            if superop is not None:
                key = round(step, 15)
                if key not in cache:
                    x = step * superop
                    poly = np.eye(n * n, dtype=complex)
                    term = np.eye(n * n, dtype=complex)
                    for k in range(1, 5):
                        term = term @ x / k
                        poly = poly + term
                    cache[key] = poly
                prop = np.linalg.matrix_power(cache[key], steps)
                rho = (prop @ rho.ravel()).reshape(n, n)
            else:
                for _ in range(steps):
                    rho = _rk4_step(rho, h, model, step)
        now = target
        out[i] = rho
    return out


def _check_states(states: np.ndarray) -> tuple[float, float]:
    trace_err = float(np.max(np.abs(np.trace(states, axis1=1, axis2=2) - 1)))
    if trace_err > TRACE_TOL:
        raise ValueError(f"trace drift {trace_err:.3e} exceeds {TRACE_TOL}; reduce dt")
    herm = float(np.max(np.abs(states - np.conj(np.swapaxes(states, 1, 2)))))
    if herm > TRACE_TOL:
        raise ValueError(f"Hermiticity drift {herm:.3e} exceeds {TRACE_TOL}; reduce dt")
    hermitian = 0.5 * (states + np.conj(np.swapaxes(states, 1, 2)))
    min_eig = float(np.min(np.linalg.eigvalsh(hermitian)))
    if min_eig < -POSITIVITY_TOL:
        raise ValueError(f"positivity violated (min eigenvalue {min_eig:.3e}); reduce dt")
    return trace_err, min_eig


def _trajectory_states(rho0, h, model: NoiseModel, t_grid, dt: float, method: str) -> np.ndarray:
    if method not in ("auto", "integrate", "closed-form"):
        raise ValueError(f"unknown method {method!r}")
    if model.kind is NoiseKind.DEPHASING and method != "integrate":
        spec = _spectrum(h)
        t = _check_grid(t_grid, dt)
        return np.array([dephasing_evolve(rho0, spec, model.gamma, ti).matrix for ti in t])
    if method == "closed-form":
        raise ValueError("closed form is only available for pure dephasing")
    return integrate(rho0, h, model, t_grid, dt)


def evolve(rho0, h, model: NoiseModel, t_grid, dt: float = 1e-3, keep_states: bool = False,
           method: str = "integrate") -> Trajectory:
    """Evolve ``rho0`` and record energy and ergotropy at each grid time."""
    states = _trajectory_states(rho0, h, model, t_grid, dt, method)
    trace_err, min_eig = _check_states(states)
    m = _matrix(h)
    spec = _spectrum(h)
    energies = np.real(np.einsum("ij,tji->t", m, states))
    ergs = np.array([ergotropy(_hermitian_state(r), spec) for r in states])
    return Trajectory(np.asarray(t_grid, dtype=float), energies, ergs,
                      states=states if keep_states else None,
                      trace_error=trace_err, min_eigenvalue=min_eig)


def _hermitian_state(rho: np.ndarray) -> QuantumState:
    r = 0.5 * (rho + rho.conj().T)
    return QuantumState.mixed(r / np.trace(r).real)


def _resolve_h(topology) -> Hamiltonian:
    if isinstance(topology, Hamiltonian):
        return topology
    if isinstance(topology, TopologySpec):
        return build_hamiltonian(topology)
    return Hamiltonian(np.asarray(topology, dtype=complex))


def work_trajectory(topology, rho0, model: NoiseModel, strategies=("erg", "free", "zero"), t_grid=None,
                    dt: float = 1e-3, method: str = "auto", keep_states: bool = False) -> Trajectory:
    """Work extracted at each time by the requested discharge strategies.

    U_erg is optimal for rho(t), U_0 for rho(0) and U_free = U_0 exp(iHt) for
    the noiselessly evolved state. Raises if any strategy beats the ergotropy.
    """
    h = _resolve_h(topology)
    spec = h.spectrum
    st0 = _as_state(rho0)
    wanted = [Strategy(s) for s in strategies]
    for s in wanted:
        if s not in (Strategy.ERG, Strategy.FREE, Strategy.ZERO):
            raise ValueError(f"strategy {s.value!r} is not a noisy-cell discharge strategy")
    t = np.linspace(0, 10, 201) if t_grid is None else np.asarray(t_grid, dtype=float)
    states = _trajectory_states(st0, h, model, t, dt, method)
    trace_err, min_eig = _check_states(states)

    m = h.matrix
    u_zero = optimal_unitary(st0, spec, Strategy.ZERO, "rho(0)").matrix
    energies = np.real(np.einsum("ij,tji->t", m, states))
    ergs = np.empty(t.size)
    work = {s.value: np.empty(t.size) for s in wanted}
    for i, (ti, rho) in enumerate(zip(t, states)):
        state = _hermitian_state(rho)
        ergs[i] = ergotropy(state, spec)
        for s in wanted:
            if s is Strategy.ERG:
                u = optimal_unitary(state, spec, Strategy.ERG).matrix
            elif s is Strategy.ZERO:
                u = u_zero
            else:
                u = u_zero @ evolution_operator(spec, -ti)
            after = u @ state.matrix @ u.conj().T
            work[s.value][i] = energies[i] - float(np.real(np.trace(m @ after)))
            if work[s.value][i] > ergs[i] + 1e-9:
                raise ValueError(f"strategy {s.value} exceeds ergotropy at t={ti}")
    return Trajectory(t, energies, ergs, work, states if keep_states else None, trace_err, min_eig)
