"""Closed-form and semiclassical reference solutions.

Phase-space units: x in units of the zero-point width x0 and p in units of
hbar / (2 x0), so the coherent amplitude is alpha = (x + i p) / 2.

The semiclassical centroid obeys d(alpha)/dt = -i omega alpha - i eta ds/dt
with s = <sigma_z>/2, the first-order Lamb-Dicke force on the atom.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import PAULIS
from .errors import DegenerateParametersError, DomainError
from .model import SystemParams
from .pulse import PulseShape


class PhasePoint(NamedTuple):
    x: float
    p: float

    @property
    def alpha(self) -> complex:
        return complex(self.x, self.p) / 2


@dataclass(frozen=True)
class BlochInit:
    """Initial Bloch vector with the x axis as zenith.

    <sx> = cos(theta), <sy> = sin(theta) sin(phi_b), <sz> = sin(theta) cos(phi_b).
    """

    theta: float
    phi_b: float = 0.0

    @property
    def vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([math.cos(self.theta), st * math.sin(self.phi_b), st * math.cos(self.phi_b)])

    @property
    def state(self) -> np.ndarray:
        """A pure qubit state with this Bloch vector (|0> is sz = +1)."""
        x, y, z = self.vector
        pol = math.acos(max(-1.0, min(1.0, z)))
        azi = math.atan2(y, x)
        return np.array([math.cos(pol / 2), np.exp(1j * azi) * math.sin(pol / 2)])

    @classmethod
    def from_state(cls, psi: np.ndarray) -> "BlochInit":
        psi = np.asarray(psi, dtype=complex) / np.linalg.norm(psi)
        rho = np.outer(psi, psi.conj())
        x, y, z = (float(np.trace(rho @ s).real) for s in PAULIS[1:])
        return cls(math.acos(max(-1.0, min(1.0, x))), math.atan2(y, z))


RK4_STEPS_PER_PERIOD = 400

TOMOGRAPHY_BLOCH = (BlochInit(math.pi / 2, 0.0), BlochInit(math.pi / 2, math.pi),
                    BlochInit(0.0, 0.0), BlochInit(math.pi / 2, math.pi / 2))


def _bloch_rhs(omega_vec, r):
    return np.cross(omega_vec, r)


def semiclassical_trajectory(pulse: PulseShape, params: SystemParams, init: BlochInit, t_grid) -> np.ndarray:
    """Centroid (x, p) on ``t_grid`` from the first-order semiclassical equations.

    Returns an array of shape (len(t_grid), 2). Integrates the Bloch vector
    and the driven oscillator together with classical RK4, subdividing each
    grid interval so no step exceeds 1/RK4_STEPS_PER_PERIOD of the fastest period.
    """
    t = np.asarray(t_grid, dtype=float)
    if t[0] != 0.0:
        raise DomainError("t_grid must start at 0")
    W, w, eta, delta = params.omega_rabi, params.omega_trap, params.eta, params.detuning

    def rhs(tt, r, alpha):
        phi = pulse.phase_at(min(tt, pulse.duration))
        ov = np.array([W * math.cos(phi), W * math.sin(phi), delta])
        dr = _bloch_rhs(ov, r)
        return dr, -1j * w * alpha - 1j * eta * dr[2] / 2

    h_max = 2 * math.pi / (RK4_STEPS_PER_PERIOD * max(W, w, abs(delta)))
    r = init.vector.astype(float)
    alpha = 0j
    out = np.zeros((len(t), 2))
    for k in range(1, len(t)):
        sub = max(1, math.ceil((t[k] - t[k - 1]) / h_max))
        h = (t[k] - t[k - 1]) / sub
        for j in range(sub):
            t0 = t[k - 1] + j * h
            k1r, k1a = rhs(t0, r, alpha)
            k2r, k2a = rhs(t0 + h / 2, r + h / 2 * k1r, alpha + h / 2 * k1a)
            k3r, k3a = rhs(t0 + h / 2, r + h / 2 * k2r, alpha + h / 2 * k2a)
            k4r, k4a = rhs(t0 + h, r + h * k3r, alpha + h * k3a)
            r = r + h / 6 * (k1r + 2 * k2r + 2 * k3r + k4r)
            alpha = alpha + h / 6 * (k1a + 2 * k2a + 2 * k3a + k4a)
        out[k] = 2 * alpha.real, 2 * alpha.imag
    return out


def mossbauer_alpha(params: SystemParams, init: BlochInit, t):
    """Coherent amplitude under a zero-phase constant drive, exact for the first-order equations."""
    W, w, eta = params.omega_rabi, params.omega_trap, params.eta
    if abs(w - W) / W < 1e-6:
        raise DegenerateParametersError("trap frequency equals Rabi frequency")
    t = np.asarray(t, dtype=float)
    ph = init.phi_b
    integral = (np.exp(1j * ph) * (np.exp(1j * (w - W) * t) - 1) / (1j * (w - W))
                - np.exp(-1j * ph) * (np.exp(1j * (w + W) * t) - 1) / (1j * (w + W))) / 2j
    return -1j * eta * W * math.sin(init.theta) / 2 * np.exp(-1j * w * t) * integral


def mossbauer_trajectory(params: SystemParams, init: BlochInit, t) -> PhasePoint:
    """Closed-form centroid of a zero-phase constant pulse.

    Real form of ``mossbauer_alpha``:
    x = eta sin(theta) [w W/(w^2 - W^2)] [sin(W t - phi) + sin(phi) cos(w t) - (W/w) cos(phi) sin(w t)]
    p = eta sin(theta) [w W/(w^2 - W^2)] [(W/w) cos(W t - phi) - sin(phi) sin(w t) - (W/w) cos(phi) cos(w t)]
    """
    W, w, eta = params.omega_rabi, params.omega_trap, params.eta
    if abs(w - W) / W < 1e-6:
        raise DegenerateParametersError("trap frequency equals Rabi frequency")
    ph, st = init.phi_b, math.sin(init.theta)
    pref = eta * st * w * W / (w**2 - W**2)
    t = np.asarray(t, dtype=float)
    x = pref * (np.sin(W * t - ph) + math.sin(ph) * np.cos(w * t) - W / w * math.cos(ph) * np.sin(w * t))
    p = pref * (W / w * np.cos(W * t - ph) - math.sin(ph) * np.sin(w * t) - W / w * math.cos(ph) * np.cos(w * t))
    return PhasePoint(x, p)


def mossbauer_endpoint(xi: float, eta: float, init: BlochInit) -> PhasePoint:
    """Centroid at the end of a pi/2 pulse (W T = pi/2) for trap ratio xi = w / W.

    This is ``mossbauer_trajectory`` at t = T. The cos(phi) cos(pi xi / 2)
    term of p has coefficient 1; a xi^2 there would break both the
    trajectory at t = T and the four-state average for non-odd xi.
    """
    if abs(xi - 1) < 1e-6:
        raise DegenerateParametersError("xi = 1 is resonant")
    ph, st = init.phi_b, math.sin(init.theta)
    c, s = math.cos(math.pi * xi / 2), math.sin(math.pi * xi / 2)
    pref = eta * st / (xi**2 - 1)
    x = pref * (xi * math.cos(ph) + xi * math.sin(ph) * c - math.cos(ph) * s)
    p = pref * (math.sin(ph) - xi * math.sin(ph) * s - math.cos(ph) * c)
    return PhasePoint(x, p)


def mossbauer_alpha_sq_avg(xi: float, eta: float) -> float:
    """<|alpha(T)|^2> over the four tomography inputs after a constant pi/2 pulse."""
    if abs(xi - 1) < 1e-12:
        raise DegenerateParametersError("xi = 1 is resonant")
    return 3 / 16 * (xi**2 - 2 * xi * math.sin(math.pi * xi / 2) + 1) / (xi**2 - 1) ** 2 * eta**2


# -- thermal channel -----------------------------------------------------------

@dataclass(frozen=True)
class ThermalChannel:
    chi: np.ndarray            # 2x2 in the {identity, sigma_n} basis
    eigenvalues: tuple         # (chi_plus, chi_minus)
    j_ent: float
    theta: float
    p0: float

    @property
    def j_ent_small_angle(self) -> float:
        """(1-p0)/p0 theta^2/6; first order in 1-p0 (the exact small-theta limit has p0^2)."""
        return (1 - self.p0) / self.p0 * self.theta**2 / 6

    @property
    def j_ent_first_order(self) -> float:
        return 2 / 3 * math.sin(self.theta / 2) ** 2 * (1 - self.p0)

    @property
    def j_ent_quadratic(self) -> float:
        return (1 - self.p0) * self.theta**2 / 6


def thermal_channel(theta: float, n_axis, p0: float) -> ThermalChannel:
    """Channel of exp(i theta/2 a^dag a sigma_n) on a thermal motional state."""
    n_axis = np.asarray(n_axis, dtype=float)
    if abs(np.linalg.norm(n_axis) - 1) > 1e-10:
        raise DomainError("rotation axis must be a unit vector")
    dp = 1 - p0
    g = 1 / (1 - dp * np.exp(1j * theta))
    chi = 0.5 * np.eye(2) + p0 / 2 * np.array([[g.real, -1j * g.imag], [1j * g.imag, -g.real]])
    mag = p0 * abs(g)
    return ThermalChannel(chi, (0.5 * (1 + mag), 0.5 * (1 - mag)), (1 - mag) / 3, float(theta), float(p0))


def thermal_unitary(theta: float, n_axis, n_fock: int) -> np.ndarray:
    """Joint operator sum_n V^n (x) |n><n| with V = exp(i theta sigma_n / 2)."""
    nx, ny, nz = n_axis
    sn = nx * PAULIS[1] + ny * PAULIS[2] + nz * PAULIS[3]
    U = np.zeros((2, n_fock, 2, n_fock), dtype=complex)
    for n in range(n_fock):
        U[:, n, :, n] = math.cos(n * theta / 2) * PAULIS[0] + 1j * math.sin(n * theta / 2) * sn
    return U.reshape(2 * n_fock, 2 * n_fock)


# -- randomized benchmarking saturation ---------------------------------------

def rb_saturation(p0: float) -> float:
    if not 0 < p0 <= 1:
        raise DomainError("p0 must lie in (0, 1]")
    return (1 - p0) / 2


def haar_theta_pdf(theta):
    """Density of the rotation angle of a Haar-random SU(2) element on [0, 2 pi]."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or np.any(theta > 2 * np.pi):
        raise DomainError("theta outside [0, 2 pi]")
    return np.sin(theta / 2) ** 2 / np.pi


def haar_theta_cdf(theta):
    theta = np.asarray(theta, dtype=float)
    return (theta - np.sin(theta)) / (2 * np.pi)


def two_level_j_ent(theta: float, p0: float) -> float:
    """Entanglement cost of p0 rho + (1-p0) U rho U^dag for a rotation U by theta (exact)."""
    q = 1 - p0
    return (1 - math.sqrt(max(0.0, 1 - 4 * p0 * q * math.sin(theta / 2) ** 2))) / 3


def rb_j_ent_asymptotic(theta: float, p0: float) -> float:
    """First-order-in-(1-p0) form (2/3)(1-p0) sin^2(theta/2)."""
    return 2 / 3 * (1 - p0) * math.sin(theta / 2) ** 2
