"""Process tomography of a joint unitary with a thermal motional input.

The qubit channel is read directly from the 2x2 blocks of the joint
unitary: K_{m',m} = sqrt(p_m) <m'|U|m>. Its Pauli-basis chi matrix is
diagonalised to give the canonical Kraus operators E_k, ordered by weight.

Gradients: ``weighted_cost`` also returns Gamma, the derivative of the cost
with respect to conj(U), normalised so that dJ = 2 Re Tr(Gamma^dag dU).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import PAULIS, joint_blocks, rot_zxz
from .errors import NumericalConsistencyError, TruncationError
from .model import SystemParams, thermal_cutoff

DEGENERACY_GAP = 1e-12
QUBIT_INPUTS = np.array([[1, 0], [0, 1], [1, 1], [1, 1j]], dtype=complex)
QUBIT_INPUTS[2:] /= math.sqrt(2)


def thermal_weights(p0: float, n_max: int | None = None) -> np.ndarray:
    """Renormalised p_n = p0 (1 - p0)^n for n <= n_max."""
    n_max = thermal_cutoff(p0) if n_max is None else n_max
    p = p0 * (1 - p0) ** np.arange(n_max + 1)
    if p.sum() < 1 - 1e-10:
        raise TruncationError(f"thermal weights up to n={n_max} only sum to {p.sum():.12f}")
    return p / p.sum()


def _weights(params: SystemParams | None, weights) -> np.ndarray:
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        return w / w.sum()
    return thermal_weights(params.p0, params.n_thermal_max)


def kraus_from_joint_unitary(U: np.ndarray, params: SystemParams | None = None, weights=None) -> np.ndarray:
    """Weighted blocks sqrt(p_m) <m'|U|m>, shape (n_fock * n_inputs, 2, 2)."""
    p = _weights(params, weights)
    U4 = joint_blocks(U)
    n = U4.shape[1]
    if len(p) > n:
        raise TruncationError(f"{len(p)} thermal levels do not fit n_fock={n}")
    blocks = U4[:, :, :, : len(p)] * np.sqrt(p)[None, None, None, :]
    K = blocks.transpose(1, 3, 0, 2).reshape(-1, 2, 2)
    completeness = np.einsum("kab,kac->bc", K.conj(), K)
    dev = np.abs(completeness - np.eye(2)).max()
    if dev > 1e-6:
        raise TruncationError(f"Kraus completeness violated by {dev:.2e}")
    return K


def pauli_coefficients(K: np.ndarray) -> np.ndarray:
    """c[mu, x] = Tr(sigma_mu^dag K_x) / 2 for a stack of 2x2 operators."""
    return np.einsum("uab,xab->ux", PAULIS.conj(), np.asarray(K).reshape(-1, 2, 2)) / 2


def target_overlaps(U_tar: np.ndarray) -> np.ndarray:
    """t_mu = Tr(U_tar^dag sigma_mu)/2, so Tr(U_tar^dag E)/2 = t . v for E = sum v_mu sigma_mu."""
    return np.einsum("ba,uab->u", U_tar.conj(), PAULIS) / 2


@dataclass
class ChiDecomposition:
    eigenvalues: np.ndarray          # descending
    vectors: np.ndarray              # columns are Pauli coefficient vectors
    coeffs: np.ndarray = field(repr=False)   # C, with chi = C C^dag

    @property
    def kraus(self) -> np.ndarray:
        return np.einsum("uk,uab->kab", self.vectors, PAULIS)

    @property
    def chi(self) -> np.ndarray:
        return self.coeffs @ self.coeffs.conj().T


def chi_decompose(kraus: np.ndarray, U_tar: np.ndarray | None = None) -> ChiDecomposition:
    C = pauli_coefficients(kraus)
    chi = C @ C.conj().T
    lam, vec = np.linalg.eigh((chi + chi.conj().T) / 2)
    if lam[0] < -1e-10:
        raise NumericalConsistencyError(f"chi matrix not positive semidefinite: {lam[0]:.2e}")
    lam, vec = lam[::-1].copy(), vec[:, ::-1].copy()
    if U_tar is not None and lam[0] - lam[1] < DEGENERACY_GAP:
        deg = lam[0] - lam < DEGENERACY_GAP
        sub = vec[:, deg]
        coef = (target_overlaps(U_tar) @ sub).conj()
        if np.linalg.norm(coef) > 0:
            v0 = sub @ (coef / np.linalg.norm(coef))
            rest = scipy.linalg.null_space(v0.conj()[None, :] @ sub) if sub.shape[1] > 1 else None
            vec[:, deg] = np.column_stack([v0] + ([sub @ rest] if rest is not None and rest.size else []))
    return ChiDecomposition(lam, vec, C)


def average_fidelity(eigenvalues, kraus_E, U_tar: np.ndarray) -> float:
    overl = np.abs(np.einsum("ba,kab->k", U_tar.conj(), kraus_E) / 2) ** 2
    return float((1 + 2 * np.sum(np.asarray(eigenvalues) * overl)) / 3)


def j_ent(eigenvalues) -> float:
    return float(2 / 3 * (1 - eigenvalues[0]))


def j_uni(E0: np.ndarray, U_tar: np.ndarray) -> float:
    return float(2 / 3 * (1 - abs(np.trace(U_tar.conj().T @ E0) / 2) ** 2))


def euler_zxz(R: np.ndarray) -> tuple[float, float, float]:
    """(alpha, theta, beta) with R = R_z(beta) R_x(theta) R_z(alpha) up to phase; theta in [0, pi]."""
    V = R / np.sqrt(np.linalg.det(R))
    theta = 2 * math.atan2(abs(V[0, 1]), abs(V[0, 0]))
    tiny = 1e-14
    if abs(V[0, 0]) < tiny:
        total, diff = 0.0, 2 * np.angle(1j * V[0, 1])
    elif abs(V[0, 1]) < tiny:
        total, diff = -2 * np.angle(V[0, 0]), 0.0
    else:
        total, diff = -2 * np.angle(V[0, 0]), 2 * np.angle(1j * V[0, 1])
    alpha = _wrap((total + diff) / 2)
    beta = _wrap((total - diff) / 2)
    return alpha, theta, beta


def _wrap(x: float) -> float:
    """Map to (-pi, pi]."""
    y = math.remainder(x, 2 * math.pi)
    return math.pi if y == -math.pi else y


def j_uni_mikado(R_mik: np.ndarray) -> tuple[float, float, float, float]:
    """Closed-form Mikado unitary cost of a 2x2 unitary.

    Returns (j, alpha', beta', delta_theta) where
    R_mik = R_z(beta') R_x(pi/2 + delta_theta) R_z(alpha') and
    j = (2/3) sin^2(delta_theta / 2).
    """
    alpha, theta, beta = euler_zxz(R_mik)
    dtheta = theta - math.pi / 2
    return 2 / 3 * math.sin(dtheta / 2) ** 2, alpha, beta, dtheta


def _mikado_kvec(s: float, d: float) -> np.ndarray:
    """k with Tr(R(alpha, pi/2, beta)^dag E)/2 = k . conj(v), s = alpha + beta, d = alpha - beta."""
    return np.array([math.cos(s / 2), -1j * math.cos(d / 2), 1j * math.sin(d / 2),
                     -1j * math.sin(s / 2)]) / math.sqrt(2)


def mikado_overlap(v: np.ndarray) -> tuple[float, float, float]:
    """max over (alpha, beta) of |Tr(R(alpha, pi/2, beta)^dag E)/2|^2 for E = sum v_mu sigma_mu.

    Returns (max, s, d). The overlap is P(s) + Q(d) with P, Q half-angle
    ellipses; a coarse grid seeds a 2-D Newton refinement.
    """
    ev = np.asarray(v).conj() / math.sqrt(2)
    A, B = ev[0], -1j * ev[3]
    C, D = -1j * ev[1], 1j * ev[2]
    grid = np.linspace(0, 4 * np.pi, 48, endpoint=False)
    P = A * np.cos(grid / 2) + B * np.sin(grid / 2)
    Q = C * np.cos(grid / 2) + D * np.sin(grid / 2)
    g = np.abs(P[:, None] + Q[None, :]) ** 2
    i, j = np.unravel_index(np.argmax(g), g.shape)
    s, d = grid[i], grid[j]
    for _ in range(50):
        cs, ss, cd, sd = math.cos(s / 2), math.sin(s / 2), math.cos(d / 2), math.sin(d / 2)
        F = A * cs + B * ss + C * cd + D * sd
        Ps = (-A * ss + B * cs) / 2
        Qd = (-C * sd + D * cd) / 2
        Pss = -(A * cs + B * ss) / 4
        Qdd = -(C * cd + D * sd) / 4
        grad = np.array([2 * (F.conjugate() * Ps).real, 2 * (F.conjugate() * Qd).real])
        hess = np.array([
            [2 * abs(Ps) ** 2 + 2 * (F.conjugate() * Pss).real, 2 * (Ps.conjugate() * Qd).real],
            [2 * (Ps.conjugate() * Qd).real, 2 * abs(Qd) ** 2 + 2 * (F.conjugate() * Qdd).real],
        ])
        if np.all(np.linalg.eigvalsh(hess) < 0):
            step = -np.linalg.solve(hess, grad)
        else:
            step = 0.5 * grad
        s, d = s + step[0], d + step[1]
        if np.max(np.abs(step)) < 1e-13:
            break
    F = A * math.cos(s / 2) + B * math.sin(s / 2) + C * math.cos(d / 2) + D * math.sin(d / 2)
    return float(abs(F) ** 2), float(s), float(d)


def j_uni_mikado_channel(v0: np.ndarray) -> tuple[float, float, float]:
    """Mikado unitary cost of a (possibly non-unitary) dominant Kraus operator."""
    g, s, d = mikado_overlap(v0)
    return 2 / 3 * (1 - g), s, d


def nearest_unitary(E: np.ndarray) -> np.ndarray:
    u, _ = scipy.linalg.polar(E)
    return u


def motion_quanta(n_fock: int) -> np.ndarray:
    return np.tile(np.arange(n_fock, dtype=float), 2)


def _mot_inputs(n_fock: int, n_inputs: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Input states psi_k (x) |n> as columns, with their k and n labels."""
    d = 2 * n_fock
    cols, ks, ns = [], [], []
    for n in range(n_inputs):
        for k, q in enumerate(QUBIT_INPUTS):
            v = np.zeros(d, dtype=complex)
            v[n] = q[0]
            v[n_fock + n] = q[1]
            cols.append(v)
            ks.append(k)
            ns.append(n)
    return np.array(cols).T, np.array(ks), np.array(ns)


def _mot_terms(U: np.ndarray, p: np.ndarray):
    n_fock = U.shape[0] // 2
    Psi, _, ns = _mot_inputs(n_fock, len(p))
    Y = U @ Psi
    N = motion_quanta(n_fock)
    gain = np.einsum("ix,i->x", np.abs(Y) ** 2, N) - ns
    return Psi, Y, N, gain, p[ns]


def j_mot(U: np.ndarray, params: SystemParams | None = None, weights=None) -> float:
    """Average absolute change of a^dag a over the four qubit inputs and thermal Fock inputs."""
    p = _weights(params, weights)
    _, _, _, gain, pw = _mot_terms(U, p)
    return float(np.sum(pw * np.abs(gain)) / 4)


@dataclass
class ProcessResult:
    chi_eigenvalues: np.ndarray
    kraus_ops: np.ndarray
    avg_fidelity: float
    j_ent: float
    j_uni: float
    j_mot: float
    mikado: dict | None = None

    def to_dict(self) -> dict:
        d = {
            "chi": [float(x) for x in self.chi_eigenvalues],
            "j_ent": self.j_ent,
            "j_uni": self.j_uni,
            "j_mot": self.j_mot,
            "fidelity": self.avg_fidelity,
        }
        if self.mikado:
            d["mikado"] = dict(self.mikado)
        return d


def process_tomography(U: np.ndarray, params: SystemParams | None, U_tar: np.ndarray | None = None,
                       mikado_mode: bool = False, weights=None) -> ProcessResult:
    """Score a joint unitary; in Mikado mode ``j_uni`` is the loose-angle cost."""
    K = kraus_from_joint_unitary(U, params, weights)
    dec = chi_decompose(K, U_tar)
    E = dec.kraus
    lam = dec.eigenvalues
    mik = None
    if mikado_mode:
        ju, s, d = j_uni_mikado_channel(dec.vectors[:, 0])
        _, alpha, beta, dtheta = j_uni_mikado(nearest_unitary(E[0]))
        mik = {"alpha": alpha, "beta": beta, "delta_theta": dtheta,
               "alpha_opt": (s + d) / 2, "beta_opt": (s - d) / 2}
        if U_tar is None:
            U_tar = rot_zxz(alpha, math.pi / 2, beta)
    else:
        if U_tar is None:
            raise ValueError("a target unitary is required outside Mikado mode")
        ju = j_uni(E[0], U_tar)
    fid = average_fidelity(lam, E, U_tar)
    return ProcessResult(lam, E, fid, j_ent(lam), ju, j_mot(U, params, weights), mik)


# -- cost with analytic gradient ------------------------------------------------

def _eigvec_pullback(dec: ChiDecomposition, m: np.ndarray) -> np.ndarray:
    """Phi with d(2 Re m.v0) = Re sum Phi dC, through first-order eigenvector perturbation."""
    lam, V, C = dec.eigenvalues, dec.vectors, dec.coeffs
    W = C.conj().T @ V
    Phi = np.zeros_like(C)
    for j in range(1, 4):
        gap = lam[0] - lam[j]
        if gap < DEGENERACY_GAP:
            continue
        kappa = (m @ V[:, j]) / gap
        Phi += 2 * (kappa * np.outer(V[:, j].conj(), W[:, 0]) + np.conj(kappa) * np.outer(V[:, 0].conj(), W[:, j]))
    return Phi


def _gamma_from_phi(Phi: np.ndarray, p: np.ndarray, n_fock: int) -> np.ndarray:
    """Gamma for dJ = Re sum Phi dC, with C the Pauli coefficients of the Kraus blocks."""
    n_in = len(p)
    # Lambda[a, m', b, m] = sqrt(p_m) sum_mu Phi[mu, (m', m)] conj(sigma_mu[a, b]) / 2
    Phi4 = Phi.reshape(4, n_fock, n_in)
    Lam = np.einsum("uxm,uab,m->axbm", Phi4, PAULIS.conj(), np.sqrt(p)) / 2
    G = np.zeros((2, n_fock, 2, n_fock), dtype=complex)
    G[:, :, :, :n_in] = Lam.conj() / 2
    return G.reshape(2 * n_fock, 2 * n_fock)


@dataclass(frozen=True)
class CostWeights:
    w_ent: float = 100.0
    w_uni: float = 1.0
    w_mot: float = 10.0

    def __post_init__(self):
        if min(self.w_ent, self.w_uni, self.w_mot) < 0 or not (self.w_ent or self.w_uni or self.w_mot):
            raise ValueError("weights must be nonnegative and not all zero")


def weighted_cost(U: np.ndarray, params: SystemParams, weights: CostWeights, U_tar: np.ndarray | None,
                  mikado: bool = False, gradient: bool = True):
    """(J, components, Gamma) for J = w_ent J_ent + w_uni J_uni + w_mot J_mot.

    ``U_tar`` is ignored in Mikado mode. Gamma is None when ``gradient`` is false.
    """
    p = thermal_weights(params.p0, params.n_thermal_max)
    n_fock = U.shape[0] // 2
    K = kraus_from_joint_unitary(U, weights=p)
    dec = chi_decompose(K, None if mikado else U_tar)
    lam, v0 = dec.eigenvalues, dec.vectors[:, 0]
    je = 2 / 3 * (1 - lam[0])
    if mikado:
        g, s, d = mikado_overlap(v0)
        k = _mikado_kvec(s, d)
        ov = k @ v0.conj()
        m_uni = ov * k.conj()
    else:
        t = target_overlaps(U_tar)
        z = t @ v0
        g = abs(z) ** 2
        m_uni = np.conj(z) * t
    ju = 2 / 3 * (1 - g)
    Psi, Y, N, gain, pw = _mot_terms(U, p)
    jm = float(np.sum(pw * np.abs(gain)) / 4)
    J = weights.w_ent * je + weights.w_uni * ju + weights.w_mot * jm
    comps = {"j_ent": float(je), "j_uni": float(ju), "j_mot": jm}
    if not gradient:
        return float(J), comps, None

    W0 = dec.coeffs.conj().T @ v0
    Phi = weights.w_ent * (-4 / 3) * np.outer(v0.conj(), W0)
    if weights.w_uni:
        Phi = Phi - weights.w_uni * (2 / 3) * _eigvec_pullback(dec, m_uni)
    gamma = _gamma_from_phi(Phi, p, n_fock)
    if weights.w_mot:
        coef = weights.w_mot * pw * np.sign(gain) / 4
        gamma = gamma + ((N[:, None] * Y) * coef[None, :]) @ Psi.conj().T
    return float(J), comps, gamma
