"""Lamb-Dicke expansion of the pulse unitary.

With U = U0(T) [1 + eta V1 + eta^2 V2 + O(eta^3)] and U0 = U_q (x) exp(-i w T a^dag a),
the qubit-operator coefficients of V1, V2 are time integrals of the
interaction-frame operators h^I(t) = U_q^dag(t) h(t) U_q(t):

    A(t)   = -i (W/2) int_0^t e^{i w s} h1^I(s) ds          V1 = a^dag A(T) - a A(T)^dag
    v_rec2 = -i (W/4) int_0^T e^{2 i w t} h0^I(t) dt
    v_ent2 =    (W/2) int_0^T h0^I(t) dt

The second-order Dyson term splits into V1^2/2 plus a commutator integral,
which supplies the primed corrections below. Integrals use cumulative
Simpson quadrature on a uniform grid.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, solve_ivp
from scipy.optimize import least_squares

from .core import PAULIS, SIGMA_Z, kron
from .errors import DomainError
from .model import SystemParams, h0_qubit, h1_qubit
from .oracles import thermal_channel
from .pulse import PulseShape

MIN_GRID = 512
DEFAULT_GRID = 4097


class RecoilTermsWarning(UserWarning):
    """The pulse is not recoil-free, so the entanglement estimate omits recoil contributions."""


def default_grid(pulse: PulseShape, params: SystemParams) -> np.ndarray:
    return np.linspace(0.0, pulse.duration, DEFAULT_GRID)


def _cumint(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Cumulative integral along axis 0 (complex-safe)."""
    re = cumulative_simpson(y.real, x=t, axis=0, initial=0)
    im = cumulative_simpson(y.imag, x=t, axis=0, initial=0)
    return re + 1j * im


def _qubit_hamiltonian(params: SystemParams, phi: float) -> np.ndarray:
    return 0.5 * params.dressed_rabi * h0_qubit(phi) + 0.5 * params.detuning * SIGMA_Z


def qubit_propagator(pulse: PulseShape, params: SystemParams, t_grid) -> np.ndarray:
    """Dressed zeroth-order qubit propagator U_q(t) sampled on ``t_grid``."""
    t = np.asarray(t_grid, dtype=float)
    if pulse.is_constant:
        H = _qubit_hamiltonian(params, pulse.constant_phase + pulse.phase_offset)
        w, v = np.linalg.eigh(H)
        return np.einsum("ij,tj,kj->tik", v, np.exp(-1j * np.outer(t, w)), v.conj())

    def rhs(tt, y):
        U = y.view(complex).reshape(2, 2)
        H = _qubit_hamiltonian(params, pulse.phase_at(min(tt, pulse.duration)))
        return (-1j * H @ U).reshape(-1).view(float)

    y0 = np.eye(2, dtype=complex).reshape(-1).view(float)
    sol = solve_ivp(rhs, (t[0], t[-1]), y0, method="DOP853", t_eval=t, rtol=1e-12, atol=1e-13)
    if not sol.success:
        raise RuntimeError(f"qubit propagation failed: {sol.message}")
    return np.ascontiguousarray(sol.y.T).view(complex).reshape(len(t), 2, 2)


def interaction_frame_ops(pulse: PulseShape, params: SystemParams, t_grid):
    """(h0^I, h1^I, U_q) on the grid, each of shape (len(t_grid), 2, 2)."""
    t = np.asarray(t_grid, dtype=float)
    if len(t) < MIN_GRID:
        raise DomainError(f"t_grid needs at least {MIN_GRID} points, got {len(t)}")
    if abs(t[0]) > 0 or abs(t[-1] - pulse.duration) > 1e-12 * pulse.duration:
        raise DomainError("t_grid must span [0, T]")
    Uq = qubit_propagator(pulse, params, t)
    phi = np.atleast_1d(pulse.phase_at(t))
    c, s = np.cos(phi)[:, None, None], np.sin(phi)[:, None, None]
    h0 = c * PAULIS[1] + s * PAULIS[2]
    h1 = c * PAULIS[2] - s * PAULIS[1]
    Uqd = Uq.conj().transpose(0, 2, 1)
    return Uqd @ h0 @ Uq, Uqd @ h1 @ Uq, Uq


def bloch_map(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A)
    if np.abs(A - A.conj().T).max() > 1e-8:
        raise DomainError("operator is not Hermitian")
    return np.array([np.trace(A @ s).real / 2 for s in PAULIS[1:]])


def _op_json(A: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in A]


def _comm(X, Y):
    return X @ Y - Y @ X


@dataclass
class ExpansionReport:
    v_rec1: np.ndarray
    v_rec2: np.ndarray
    v_ent2: np.ndarray
    second_order: dict
    bloch_len_v_ent2: float
    uq_final: np.ndarray
    duration: float
    traces: dict = field(default_factory=dict, repr=False)

    @property
    def recoil_norms(self) -> tuple[float, float]:
        return float(np.linalg.norm(self.v_rec1, 2)), float(np.linalg.norm(self.v_rec2, 2))

    def to_dict(self) -> dict:
        n1, n2 = self.recoil_norms
        return {
            "v_rec1": _op_json(self.v_rec1),
            "v_rec2": _op_json(self.v_rec2),
            "v_ent2": _op_json(self.v_ent2),
            "second_order": {k: _op_json(v) for k, v in self.second_order.items()},
            "bloch_len_v_ent2": self.bloch_len_v_ent2,
            "norm_v_rec1": n1,
            "norm_v_rec2": n2,
        }


def expansion_report(pulse: PulseShape, params: SystemParams, t_grid=None) -> ExpansionReport:
    t = default_grid(pulse, params) if t_grid is None else np.asarray(t_grid, dtype=float)
    h0, h1, Uq = interaction_frame_ops(pulse, params, t)
    W, w = params.omega_rabi, params.omega_trap
    e1 = np.exp(1j * w * t)[:, None, None]

    B = _cumint(e1 * h1, t)                   # int_0^t e^{i w s} h1^I(s) ds
    v_rec1 = -0.5j * W * B[-1]
    v_rec2 = -0.25j * W * _cumint(e1**2 * h0, t)[-1]
    v_ent_t = 0.5 * W * _cumint(h0, t)
    v_ent2 = v_ent_t[-1]

    q = W**2 / 4
    X = e1.conj() * h1 @ B                    # e^{-i w t} h1(t) int_0^t e^{i w s} h1(s) ds
    delta_v = 1j * q * _cumint(X - X.conj().transpose(0, 2, 1), t)[-1]
    CB = _comm(B, h1)
    CBd = _comm(B.conj().transpose(0, 2, 1), h1)
    v_ent2_prime = -1j * q * _cumint(e1.conj() * CB + e1 * CBd, t)[-1]
    v_rec2_prime = q * _cumint(e1 * CB, t)[-1]

    v_ent2 = (v_ent2 + v_ent2.conj().T) / 2
    return ExpansionReport(
        v_rec1=v_rec1,
        v_rec2=v_rec2,
        v_ent2=v_ent2,
        second_order={"delta_v": delta_v, "v_ent2_prime": v_ent2_prime, "v_rec2_prime": v_rec2_prime},
        bloch_len_v_ent2=float(np.linalg.norm(bloch_map(v_ent2))),
        uq_final=Uq[-1],
        duration=pulse.duration,
        traces={"t": t, "v_ent2": v_ent_t},
    )


def _ladder(n_fock: int):
    a = np.diag(np.sqrt(np.arange(1, n_fock)), 1).astype(complex)
    return a, a.conj().T


def expansion_terms(report: ExpansionReport, n_fock: int, ent_only: bool = False):
    """Joint operators (V1, V2) of the expansion; ``ent_only`` keeps just the a^dag a term."""
    a, ad = _ladder(n_fock)
    n_op = ad @ a
    r1 = report.v_rec1
    so = report.second_order
    V2 = 1j * kron(report.v_ent2 + 0.5 * so["v_ent2_prime"], n_op)
    if ent_only:
        return np.zeros_like(V2), V2
    V1 = kron(r1, ad) - kron(r1.conj().T, a)
    X = -report.v_rec2 + 0.5 * so["v_rec2_prime"]
    V2 = V2 + kron(X, ad @ ad) - kron(X.conj().T, a @ a)
    V2 = V2 + kron(0.5j * so["delta_v"], np.eye(n_fock)) + 0.5 * V1 @ V1
    return V1, V2


def reconstruct_unitary(report: ExpansionReport, params: SystemParams, ent_only: bool = False) -> np.ndarray:
    """U0(T) [1 + eta V1 + eta^2 V2] on the joint space of ``params``."""
    n = params.n_fock
    motion = np.diag(np.exp(-1j * params.omega_trap * report.duration * np.arange(n)))
    U0 = kron(report.uq_final, motion)
    if params.eta == 0:
        return U0
    V1, V2 = expansion_terms(report, n, ent_only)
    eta = params.eta
    return U0 @ (np.eye(2 * n) + eta * V1 + eta**2 * V2)


def predicted_j_ent(report: ExpansionReport, params: SystemParams, exact: bool = False) -> float:
    """Thermal entanglement cost implied by v_ent2 for a recoil-free pulse.

    The default is the small-angle form (2/3)((1-p0)/p0) eta^4 |B|^2; ``exact``
    evaluates the closed-form thermal channel at rotation angle 2 eta^2 |B|.
    """
    if max(report.recoil_norms) >= 1e-2:
        warnings.warn("recoil operators are not small; the estimate omits their contribution",
                      RecoilTermsWarning, stacklevel=2)
    p0, eta, b = params.p0, params.eta, report.bloch_len_v_ent2
    if p0 == 1:
        return 0.0
    if exact:
        return thermal_channel(2 * eta**2 * b, (1.0, 0.0, 0.0), p0).j_ent
    return 2 / 3 * (1 - p0) / p0 * eta**4 * b**2


def zeroth_order_unitary(report: ExpansionReport, params: SystemParams) -> np.ndarray:
    n = params.n_fock
    return kron(report.uq_final, np.diag(np.exp(-1j * params.omega_trap * report.duration * np.arange(n))))


def cancel_first_order_recoil(pulse: PulseShape, params: SystemParams, n_modes: int = 8,
                              tol: float = 1e-6) -> PulseShape:
    """Adjust the lowest ``n_modes`` Fourier pairs until v_rec1 vanishes.

    The condition is imposed on the bare (eta -> 0) qubit dynamics, which is
    where the first-order centroid drift is defined; the dressed frequency
    only shifts v_rec1 at order eta^2. The target gate is not constrained.
    """
    if pulse.is_constant or pulse.n_c < n_modes:
        raise DomainError(f"need a Fourier pulse with at least {n_modes} components")
    bare = params.with_(eta=0.0)
    grid = np.linspace(0.0, pulse.duration, 1025)
    coeffs = pulse.coefficients.copy()
    idx = np.r_[0:n_modes, pulse.n_c:pulse.n_c + n_modes]

    def shaped(x):
        c = coeffs.copy()
        c[idx] = x
        return PulseShape.from_coefficients(pulse.duration, c, pulse.phase_offset)

    def residual(x):
        v = expansion_report(shaped(x), bare, grid).v_rec1
        return np.concatenate([v.real.ravel(), v.imag.ravel()])

    sol = least_squares(residual, coeffs[idx], method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        max_nfev=100 * len(idx), diff_step=1e-7)
    out = shaped(sol.x)
    norm = expansion_report(out, bare).recoil_norms[0]
    if norm > tol:
        raise RuntimeError(f"first-order recoil stuck at {norm:.3g}")
    return out


def mossbauer_v_ent(params: SystemParams, t) -> np.ndarray:
    """Closed-form v_ent2(t) = sigma_x W t / 2 for a zero-phase constant pulse."""
    t = np.asarray(t, dtype=float)
    return 0.5 * params.omega_rabi * t[:, None, None] * PAULIS[1]


__all__ = [
    "ExpansionReport", "RecoilTermsWarning", "bloch_map", "cancel_first_order_recoil", "expansion_report", "expansion_terms",
    "interaction_frame_ops", "mossbauer_v_ent", "predicted_j_ent", "qubit_propagator",
    "reconstruct_unitary", "zeroth_order_unitary",
]
