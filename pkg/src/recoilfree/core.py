"""Dense operator algebra on the qubit (x) motion product space.

Ordering convention: the qubit is the slow Kronecker index, so the joint
basis index of |q>|m> is ``q * n_fock + m`` and the block ``U[q'*N + m',
q*N + m]`` over (q', q) is the 2x2 matrix <m'|U|m>.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InconsistentStateError, InvalidDimensionError

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# |0> is the sigma_z = +1 state; the drive raises |0> -> |1>.
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)
PAULIS = np.stack([SIGMA_0, SIGMA_X, SIGMA_Y, SIGMA_Z])

for _m in PAULIS:
    _m.setflags(write=False)


@dataclass(frozen=True)
class OperatorSet:
    """Motional ladder operators and the recoil factor exp(i eta (a + a^dag))."""

    n_fock: int
    eta: float
    a: np.ndarray = field(repr=False)
    a_dag: np.ndarray = field(repr=False)
    n_op: np.ndarray = field(repr=False)
    displacement: np.ndarray = field(repr=False)
    pauli: np.ndarray = field(default=PAULIS, repr=False)

    @property
    def dim(self) -> int:
        return 2 * self.n_fock


def annihilation(n_fock: int) -> np.ndarray:
    if n_fock < 2:
        raise InvalidDimensionError(f"n_fock must be >= 2, got {n_fock}")
    return np.diag(np.sqrt(np.arange(1, n_fock, dtype=float)), 1).astype(complex)


def hermitian_expm(H: np.ndarray, scale: complex) -> np.ndarray:
    """exp(scale * H) for Hermitian H through its eigendecomposition."""
    w, v = np.linalg.eigh(H)
    return (v * np.exp(scale * w)) @ v.conj().T


def build_operators(n_fock: int, eta: float) -> OperatorSet:
    if n_fock < 2:
        raise InvalidDimensionError(f"n_fock must be >= 2, got {n_fock}")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    a = annihilation(n_fock)
    a_dag = a.conj().T
    n_op = np.diag(np.arange(n_fock, dtype=float)).astype(complex)
    # x = a + a^dag is real symmetric, so exp(i eta x) is exactly unitary
    # on the truncated space; only its top rows differ from the infinite one.
    displacement = hermitian_expm(a + a_dag, 1j * eta)
    for m in (a, a_dag, n_op, displacement):
        m.setflags(write=False)
    return OperatorSet(n_fock, float(eta), a, a_dag, n_op, displacement)


def kron(qubit_op: np.ndarray, motion_op: np.ndarray) -> np.ndarray:
    return np.kron(qubit_op, motion_op)


def matrix_exponential(H: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """exp(scale * H).

    Uses the Hermitian eigendecomposition when ``scale * H`` is
    anti-Hermitian (the propagator case) and Pade scaling-and-squaring
    otherwise.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InvalidDimensionError(f"expected a square matrix, got shape {H.shape}")
    if np.allclose(H, H.conj().T, rtol=0, atol=1e-14 * max(1.0, np.abs(H).max())):
        if np.real(scale) == 0:
            return hermitian_expm((H + H.conj().T) / 2, scale)
    return scipy.linalg.expm(scale * H)


def partial_trace_motion(rho: np.ndarray, n_fock: int | None = None) -> np.ndarray:
    """Reduce a joint density matrix to the 2x2 qubit state."""
    rho = np.asarray(rho)
    d = rho.shape[0]
    if rho.ndim != 2 or rho.shape[1] != d or d % 2:
        raise InvalidDimensionError(f"bad joint density shape {rho.shape}")
    n = d // 2 if n_fock is None else n_fock
    if 2 * n != d:
        raise InvalidDimensionError(f"dimension {d} does not match n_fock={n}")
    tr = np.trace(rho)
    if abs(tr - 1) > 1e-8:
        raise InconsistentStateError(f"trace {tr:.3g} deviates from 1")
    return np.einsum("imjm->ij", rho.reshape(2, n, 2, n))


def joint_blocks(U: np.ndarray) -> np.ndarray:
    """View U as U4[q', m', q, m]."""
    n = U.shape[0] // 2
    return U.reshape(2, n, 2, n)


def projective_infidelity(A: np.ndarray, B: np.ndarray) -> float:
    """1 - |Tr(A^dag B)/2|^2, insensitive to global phases."""
    return float(1 - abs(np.trace(A.conj().T @ B) / 2) ** 2)


def rz(angle: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])


def rx(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rot_zxz(alpha: float, theta: float, beta: float) -> np.ndarray:
    """R_z(beta) R_x(theta) R_z(alpha): alpha acts first."""
    return rz(beta) @ rx(theta) @ rz(alpha)
