"""System parameters and the trapped-atom Hamiltonian (angular units, hbar = 1)."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import SIGMA_PLUS, SIGMA_X, SIGMA_Y, SIGMA_Z, OperatorSet, build_operators, kron
from .errors import InvalidDimensionError, InvalidParameterError

TWO_PI = 2 * math.pi
THERMAL_TAIL = 1e-10
FOCK_MARGIN = 12


def thermal_cutoff(p0: float) -> int:
    """Largest Fock index kept so the discarded thermal tail is below 1e-10."""
    if p0 >= 1.0:
        return 0
    return max(0, math.ceil(math.log(THERMAL_TAIL) / math.log1p(-p0)))


@dataclass(frozen=True)
class SystemParams:
    """Physical configuration.

    Frequencies are angular (rad/s). ``n_fock`` defaults to the thermal
    cutoff plus a margin of 12 levels.
    """

    omega_rabi: float
    omega_trap: float
    eta: float
    p0: float = 1.0
    probe_shift_coeff: float = 11.7
    detuning: float = 0.0
    n_fock: int | None = None
    n_thermal_max: int | None = None

    def __post_init__(self):
        if not self.omega_rabi > 0:
            raise InvalidParameterError(f"omega_rabi must be > 0, got {self.omega_rabi}")
        if not self.omega_trap > 0:
            raise InvalidParameterError(f"omega_trap must be > 0, got {self.omega_trap}")
        if not 0 <= self.eta < 1:
            raise InvalidParameterError(f"eta must lie in [0, 1), got {self.eta}")
        if not 0 < self.p0 <= 1:
            raise InvalidParameterError(f"p0 must lie in (0, 1], got {self.p0}")
        n_th = thermal_cutoff(self.p0)
        if self.n_thermal_max is None:
            object.__setattr__(self, "n_thermal_max", n_th)
        elif self.n_thermal_max < n_th:
            raise InvalidParameterError(
                f"n_thermal_max={self.n_thermal_max} leaves a thermal tail above 1e-10 (need {n_th})")
        if self.n_fock is None:
            object.__setattr__(self, "n_fock", self.n_thermal_max + FOCK_MARGIN)
        if self.n_fock < 2:
            raise InvalidDimensionError(f"n_fock must be >= 2, got {self.n_fock}")
        if self.n_fock <= self.n_thermal_max:
            raise InvalidDimensionError("n_fock must exceed n_thermal_max")

    @property
    def dressed_rabi(self) -> float:
        return self.omega_rabi * (1 - self.eta**2 / 2)

    @property
    def xi(self) -> float:
        return self.omega_trap / self.omega_rabi

    @property
    def dim(self) -> int:
        return 2 * self.n_fock

    def with_(self, **changes) -> "SystemParams":
        """Copy with changes; truncation sizes are re-derived unless given."""
        if "p0" in changes:
            changes.setdefault("n_thermal_max", None)
            changes.setdefault("n_fock", None)
        return replace(self, **changes)

    def operators(self) -> OperatorSet:
        return build_operators(self.n_fock, self.eta)


def sr88_params(p0: float = 0.95, **overrides) -> SystemParams:
    """Strontium-88 lattice clock preset: 20 kHz Rabi, 100 kHz trap, eta = 0.22."""
    base = dict(omega_rabi=TWO_PI * 20e3, omega_trap=TWO_PI * 100e3, eta=0.22,
                p0=p0, probe_shift_coeff=11.7)
    base.update(overrides)
    return SystemParams(**base)


def sr88_mikado_duration(params: SystemParams | None = None) -> float:
    omega = TWO_PI * 20e3 if params is None else params.omega_rabi
    return 0.825 * math.pi / omega


def h0_qubit(phi: float) -> np.ndarray:
    return np.cos(phi) * SIGMA_X + np.sin(phi) * SIGMA_Y


def h1_qubit(phi: float) -> np.ndarray:
    return np.cos(phi) * SIGMA_Y - np.sin(phi) * SIGMA_X


def _check(params: SystemParams, ops: OperatorSet):
    if ops.n_fock != params.n_fock or not math.isclose(ops.eta, params.eta, abs_tol=0.0):
        raise InvalidDimensionError(
            f"operator set (n_fock={ops.n_fock}, eta={ops.eta}) does not match params "
            f"(n_fock={params.n_fock}, eta={params.eta})")


def _static_part(params: SystemParams, ops: OperatorSet) -> np.ndarray:
    H = params.omega_trap * kron(np.eye(2), ops.n_op)
    if params.detuning:
        H = H + 0.5 * params.detuning * kron(SIGMA_Z, np.eye(ops.n_fock))
    return H


def hamiltonian_exact(params: SystemParams, phi: float, ops: OperatorSet | None = None) -> np.ndarray:
    ops = params.operators() if ops is None else ops
    _check(params, ops)
    drive = np.exp(1j * phi) * kron(SIGMA_PLUS, ops.displacement)
    H = 0.5 * params.omega_rabi * (drive + drive.conj().T) + _static_part(params, ops)
    return (H + H.conj().T) / 2


def hamiltonian_expanded(params: SystemParams, phi: float, ops: OperatorSet | None = None,
                         order: int = 2) -> np.ndarray:
    """Lamb-Dicke expansion of the Hamiltonian up to ``order`` in eta.

    The zeroth-order drive always carries the dressed Rabi frequency.
    """
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    ops = params.operators() if ops is None else ops
    _check(params, ops)
    eye = np.eye(ops.n_fock)
    half = 0.5 * params.omega_rabi
    eta = params.eta
    H = 0.5 * params.dressed_rabi * kron(h0_qubit(phi), eye) + _static_part(params, ops)
    if order >= 1:
        H = H + eta * half * kron(h1_qubit(phi), ops.a + ops.a_dag)
    if order >= 2:
        squeeze = -0.5 * (ops.a_dag @ ops.a_dag + ops.a @ ops.a) - ops.n_op
        H = H + eta**2 * half * kron(h0_qubit(phi), squeeze)
    return H


@dataclass(frozen=True)
class IntensityDeviation:
    rel_dev: float

    def __post_init__(self):
        if abs(self.rel_dev) > 0.1:
            raise InvalidParameterError(f"|rel_dev| must be <= 0.1, got {self.rel_dev}")


def apply_intensity_deviation(params: SystemParams, dev: IntensityDeviation | float) -> SystemParams:
    """Probe shift plus field-amplitude scaling of the Rabi frequency."""
    rel = dev.rel_dev if isinstance(dev, IntensityDeviation) else float(dev)
    if 1 + rel <= 0:
        raise InvalidParameterError(f"1 + rel_dev must be positive, got {1 + rel}")
    if rel == 0:
        return params
    return replace(
        params,
        detuning=params.detuning + params.probe_shift_coeff * params.omega_rabi * rel,
        omega_rabi=params.omega_rabi * math.sqrt(1 + rel),
    )
