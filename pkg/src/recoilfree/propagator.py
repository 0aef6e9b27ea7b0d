"""Time-ordered propagation of the joint qubit-motion unitary.

Midpoint rule: each step applies exp(-i H(phi(t_mid)) dt). The phase enters
only through a frame rotation, H(phi) = R(phi) H(0) R(phi)^dag with
R(phi) = exp(-i phi sigma_z / 2) (x) 1, so a single step exponential
W = exp(-i H(0) dt) serves every step and a step reduces to a matrix
product plus two diagonal scalings.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .core import hermitian_expm
from .errors import TruncationError
from .model import SystemParams, TWO_PI, hamiltonian_exact, hamiltonian_expanded
from .pulse import PulseShape, fourier_basis

log = logging.getLogger(__name__)

LEAKAGE_LIMIT = 1e-8
FOCK_ESCALATION = 8


@dataclass(frozen=True)
class PropagationConfig:
    n_steps: int | None = None
    tolerance: float = 1e-9
    use_exact_hamiltonian: bool = True
    expansion_order: int = 2
    leakage_guard: bool = True

    def __post_init__(self):
        if self.n_steps is not None and self.n_steps < 16:
            raise ValueError(f"n_steps must be >= 16, got {self.n_steps}")

    def steps_for(self, duration: float, params: SystemParams) -> int:
        return self.n_steps if self.n_steps is not None else default_steps(duration, params)


def default_steps(duration: float, params: SystemParams) -> int:
    fastest = max(params.omega_rabi, params.omega_trap)
    return max(256, math.ceil(40 * duration * fastest / TWO_PI))


@dataclass(frozen=True)
class ZRotation:
    angle: float


@dataclass(frozen=True)
class FreeEvolution:
    duration: float


Segment = Union[PulseShape, ZRotation, FreeEvolution]


def frame_weights(n_fock: int) -> np.ndarray:
    """Diagonal of sigma_z/2 (x) 1 in the joint basis."""
    return np.repeat([0.5, -0.5], n_fock)


def _hamiltonian(params: SystemParams, phi: float, exact: bool, order: int) -> np.ndarray:
    if exact:
        return hamiltonian_exact(params, phi)
    return hamiltonian_expanded(params, phi, order=order)


@lru_cache(maxsize=128)
def _step_exponential(params: SystemParams, dt: float, exact: bool, order: int) -> np.ndarray:
    W = hermitian_expm(_hamiltonian(params, 0.0, exact, order), -1j * dt)
    W.setflags(write=False)
    return W


class StepTable:
    """Cached single-step exponential for one (params, grid) pair."""

    def __init__(self, params: SystemParams, duration: float, n_steps: int,
                 exact: bool = True, order: int = 2):
        self.params = params
        self.duration = float(duration)
        self.n_steps = int(n_steps)
        self.dt = self.duration / self.n_steps
        self.W = _step_exponential(params, self.dt, exact, order)
        self.s = frame_weights(params.n_fock)
        self.t_mid = (np.arange(self.n_steps) + 0.5) * self.dt

    def phases(self, pulse: PulseShape) -> np.ndarray:
        return np.asarray(pulse.phase_at(self.t_mid), dtype=float)

    def basis(self, n_c: int) -> np.ndarray:
        return fourier_basis(self.t_mid, self.duration, n_c)

    def _z(self, phases):
        return np.exp(-1j * np.outer(phases, self.s))

    def unitary(self, phases: np.ndarray) -> np.ndarray:
        z = self._z(phases)
        W = self.W
        X = W * z[0].conj()[None, :]
        for k in range(1, len(phases)):
            X = W @ ((z[k].conj() * z[k - 1])[:, None] * X)
        return z[-1][:, None] * X

    def products(self, phases: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Frame-stripped partial products Q_k and the final unitary.

        The forward product after k steps is P_k = diag(z_k) Q_k.
        """
        z = self._z(phases)
        W = self.W
        N, d = len(phases), W.shape[0]
        Q = np.empty((N, d, d), dtype=complex)
        X = W * z[0].conj()[None, :]
        Q[0] = X
        for k in range(1, N):
            X = W @ ((z[k].conj() * z[k - 1])[:, None] * X)
            Q[k] = X
        return Q, z[-1][:, None] * X

    def phase_gradient(self, Q: np.ndarray, U: np.ndarray, gamma: np.ndarray) -> np.ndarray:
        """d f / d phi_k for all steps, given Gamma = d f / d conj(U).

        Uses dU/dphi_k = -i U (G_k - G_{k-1}) with G_k = P_k^dag S P_k.
        """
        M = gamma.conj().T @ U
        Y = Q @ M
        T = np.einsum("kij,kij,i->k", Y, Q.conj(), self.s)
        T0 = np.sum(self.s * np.diag(M))
        dT = np.diff(np.concatenate([[T0], T]))
        return 2 * dT.imag

    def states(self, phases: np.ndarray, psi0: np.ndarray) -> np.ndarray:
        """State after each step; row 0 is the initial state."""
        z = self._z(phases)
        W = self.W
        psi = np.asarray(psi0, dtype=complex)
        out = np.empty((len(phases) + 1,) + psi.shape, dtype=complex)
        out[0] = psi
        for k in range(len(phases)):
            zk = z[k] if psi.ndim == 1 else z[k][:, None]
            psi = zk * (W @ (zk.conj() * psi))
            out[k + 1] = psi
        return out


def _tomography_columns(U: np.ndarray, n_th: int) -> list[np.ndarray]:
    n = U.shape[0] // 2
    cols = []
    for m in range(min(n_th, n - 1) + 1):
        c0, c1 = U[:, m], U[:, n + m]
        cols += [c0, c1, (c0 + c1) / math.sqrt(2), (c0 + 1j * c1) / math.sqrt(2)]
    return cols


def top_population(U: np.ndarray, n_th: int) -> float:
    """Largest population in the top two Fock levels over tomography inputs."""
    n = U.shape[0] // 2
    top = [n - 2, n - 1, 2 * n - 2, 2 * n - 1]
    return max(float(np.sum(np.abs(c[top]) ** 2)) for c in _tomography_columns(U, n_th))


def _evolve_once(pulse: PulseShape, params: SystemParams, cfg: PropagationConfig) -> np.ndarray:
    if pulse.is_constant:
        phi = pulse.constant_phase + pulse.phase_offset
        H = _hamiltonian(params, phi, cfg.use_exact_hamiltonian, cfg.expansion_order)
        return hermitian_expm(H, -1j * pulse.duration)
    table = StepTable(params, pulse.duration, cfg.steps_for(pulse.duration, params),
                      cfg.use_exact_hamiltonian, cfg.expansion_order)
    return table.unitary(table.phases(pulse))


def guarded(fn, params: SystemParams, cfg: PropagationConfig):
    """Run ``fn(params)`` under the leakage guard with one cutoff escalation."""
    U = fn(params)
    if not cfg.leakage_guard or top_population(U, params.n_thermal_max) <= LEAKAGE_LIMIT:
        return U, params
    bigger = replace(params, n_fock=params.n_fock + FOCK_ESCALATION)
    log.warning("leakage guard tripped at n_fock=%d, retrying with %d", params.n_fock, bigger.n_fock)
    U = fn(bigger)
    pop = top_population(U, bigger.n_thermal_max)
    if pop > LEAKAGE_LIMIT:
        raise TruncationError(f"top-level population {pop:.2e} at n_fock={bigger.n_fock}")
    return U, bigger


def evolve(pulse: PulseShape, params: SystemParams, cfg: PropagationConfig | None = None) -> np.ndarray:
    """Joint unitary of one pulse.

    The result may be larger than ``params.dim`` if the leakage guard had to
    escalate the Fock cutoff; downstream code reads the cutoff from the shape.
    """
    cfg = cfg or PropagationConfig()
    U, _ = guarded(lambda p: _evolve_once(pulse, p, cfg), params, cfg)
    return U


def z_rotation_diag(angle: float, n_fock: int) -> np.ndarray:
    return np.exp(-1j * angle * frame_weights(n_fock))


def free_evolution_diag(duration: float, params: SystemParams, n_fock: int) -> np.ndarray:
    energies = params.omega_trap * np.tile(np.arange(n_fock), 2) + params.detuning * frame_weights(n_fock)
    return np.exp(-1j * energies * duration)


def _sequence_once(segments, params, cfg):
    n = params.n_fock
    U = np.eye(2 * n, dtype=complex)
    for seg in segments:
        if isinstance(seg, ZRotation):
            U = z_rotation_diag(seg.angle, n)[:, None] * U
        elif isinstance(seg, FreeEvolution):
            U = free_evolution_diag(seg.duration, params, n)[:, None] * U
        elif isinstance(seg, PulseShape):
            U = _evolve_once(seg, params, cfg) @ U
        else:
            raise TypeError(f"unknown segment {seg!r}")
    return U


def evolve_sequence(segments: Sequence[Segment], params: SystemParams,
                    cfg: PropagationConfig | None = None) -> np.ndarray:
    """Product of segment unitaries in temporal order (first segment acts first)."""
    if not segments:
        raise ValueError("segment list is empty")
    cfg = cfg or PropagationConfig()
    U, _ = guarded(lambda p: _sequence_once(segments, p, cfg), params, cfg)
    return U


def step_halving_error(pulse: PulseShape, params: SystemParams, cfg: PropagationConfig | None = None) -> float:
    """Spectral-norm change of U when the step count is doubled."""
    cfg = cfg or PropagationConfig()
    n = cfg.steps_for(pulse.duration, params)
    base = replace(cfg, n_steps=n, leakage_guard=False)
    fine = replace(cfg, n_steps=2 * n, leakage_guard=False)
    diff = _evolve_once(pulse, params, base) - _evolve_once(pulse, params, fine)
    return float(np.linalg.norm(diff, 2))


def converged_steps(pulse: PulseShape, params: SystemParams, cfg: PropagationConfig | None = None,
                    max_steps: int = 1 << 16) -> int:
    """Smallest doubling of the default step count meeting ``cfg.tolerance``."""
    cfg = cfg or PropagationConfig()
    n = cfg.steps_for(pulse.duration, params)
    while n < max_steps:
        if step_halving_error(pulse, params, replace(cfg, n_steps=n)) < cfg.tolerance:
            return n
        n *= 2
    return n


def centroid_trajectory(pulse: PulseShape, params: SystemParams, psi0: np.ndarray,
                        cfg: PropagationConfig | None = None):
    """Times and <a>(t) of the propagated joint state on the step grid."""
    cfg = cfg or PropagationConfig()
    n = params.n_fock
    n_steps = cfg.steps_for(pulse.duration, params)
    times = np.linspace(0.0, pulse.duration, n_steps + 1)
    a_joint = np.kron(np.eye(2), np.diag(np.sqrt(np.arange(1, n)), 1))
    if pulse.is_constant:
        phi = pulse.constant_phase + pulse.phase_offset
        H = _hamiltonian(params, phi, cfg.use_exact_hamiltonian, cfg.expansion_order)
        w, v = np.linalg.eigh(H)
        c = v.conj().T @ psi0
        states = (v @ (np.exp(-1j * np.outer(w, times)) * c[:, None])).T
    else:
        table = StepTable(params, pulse.duration, n_steps, cfg.use_exact_hamiltonian, cfg.expansion_order)
        states = table.states(table.phases(pulse), psi0)
    alpha = np.einsum("ti,ij,tj->t", states.conj(), a_joint, states)
    return times, alpha
