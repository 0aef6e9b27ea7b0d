"""Arbitrary SU(2) gates from two Mikado pulses and three z rotations.

Program, in temporal order:

    R_z(t1), Mikado[phi], R_z(t2), Mikado[phi + pi], R_z(t3)

A Mikado pulse realises R(a, pi/2 + dth, b) = R_z(b) R_x(pi/2 + dth) R_z(a)
with a = alpha + d_alpha, b = beta + d_beta. Shifting the drive phase by pi
flips the sign of the x rotation, R(a, -(pi/2 + dth), b). The corrected z
angles absorb the calibrated deviations so that the product equals the
target exactly whenever cos^2(t2g/2) > sin^2(dth).
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .core import projective_infidelity, rot_zxz, rz, ry
from .errors import DomainError, InvalidParameterError
from .model import SystemParams, apply_intensity_deviation
from .propagator import PropagationConfig, ZRotation, evolve_sequence
from .pulse import PulseShape
from .tomography import ProcessResult, nearest_unitary, process_tomography

_TINY = 1e-14


def _wrap(x: float) -> float:
    y = math.remainder(x, 2 * math.pi)
    return math.pi if y == -math.pi else y + 0.0


@dataclass(frozen=True)
class EulerAngles:
    """U = R_z(theta3) R_y(theta2) R_z(theta1)."""

    theta1: float
    theta2: float
    theta3: float

    def __post_init__(self):
        if not -1e-12 <= self.theta2 <= math.pi + 1e-12:
            raise DomainError(f"theta2 must lie in [0, pi], got {self.theta2}")

    def matrix(self) -> np.ndarray:
        return rz(self.theta3) @ ry(self.theta2) @ rz(self.theta1)


def euler_zyz(U: np.ndarray) -> EulerAngles:
    """z-y-z angles of a 2x2 unitary, up to global phase.

    When theta2 is 0 or pi only one combination of theta1, theta3 is
    defined; theta1 is then set to 0.
    """
    U = np.asarray(U, dtype=complex)
    V = U / np.sqrt(np.linalg.det(U))
    theta2 = 2 * math.atan2(abs(V[1, 0]), abs(V[0, 0]))
    if abs(V[1, 0]) < _TINY:
        return EulerAngles(0.0, 0.0, _wrap(-2 * np.angle(V[0, 0])))
    if abs(V[0, 0]) < _TINY:
        return EulerAngles(0.0, math.pi, _wrap(2 * np.angle(V[1, 0])))
    total, diff = -2 * np.angle(V[0, 0]), -2 * np.angle(V[1, 0])
    return EulerAngles(_wrap((total + diff) / 2), theta2, _wrap((total - diff) / 2))


@dataclass(frozen=True)
class MikadoCalibration:
    alpha: float
    beta: float
    delta_alpha: float = 0.0
    delta_beta: float = 0.0
    delta_theta: float = 0.0

    def __post_init__(self):
        if not abs(self.delta_theta) < math.pi / 2:
            raise InvalidParameterError(f"|delta_theta| must be < pi/2, got {self.delta_theta}")

    @property
    def j_uni_mikado(self) -> float:
        return 2 / 3 * math.sin(self.delta_theta / 2) ** 2

    def rotation(self, sign: int = 1) -> np.ndarray:
        """The pulse's qubit rotation; ``sign=-1`` for the pi-shifted pulse."""
        return rot_zxz(self.alpha + self.delta_alpha, sign * (math.pi / 2 + self.delta_theta),
                       self.beta + self.delta_beta)

    @classmethod
    def from_unitary(cls, R: np.ndarray, alpha: float | None = None, beta: float | None = None):
        """Calibration from a measured pulse rotation, relative to nominal (alpha, beta)."""
        from .tomography import euler_zxz
        a, theta, b = euler_zxz(nearest_unitary(np.asarray(R, dtype=complex)))
        alpha = a if alpha is None else alpha
        beta = b if beta is None else beta
        return cls(alpha, beta, _wrap(a - alpha), _wrap(b - beta), theta - math.pi / 2)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "delta_alpha": self.delta_alpha,
                "delta_beta": self.delta_beta, "delta_theta": self.delta_theta}


@dataclass
class CalibrationTable:
    """Calibrations keyed by relative intensity deviation, linearly interpolated."""

    rel_devs: list
    entries: list

    def __post_init__(self):
        if len(self.rel_devs) != len(self.entries) or not self.rel_devs:
            raise InvalidParameterError("calibration table needs matching, nonempty lists")
        order = np.argsort(self.rel_devs)
        self.rel_devs = [float(self.rel_devs[i]) for i in order]
        self.entries = [self.entries[i] for i in order]

    @classmethod
    def from_mikado(cls, result) -> "CalibrationTable":
        """Build from an ``optimize_mikado`` result."""
        devs, cals = [], []
        for row in result.deviations:
            devs.append(row["rel_dev"])
            cals.append(MikadoCalibration(result.alpha, result.beta, row["delta_alpha"],
                                          row["delta_beta"], row["delta_theta"]))
        return cls(devs, cals)

    def lookup(self, rel_dev: float) -> MikadoCalibration:
        lo, hi = self.rel_devs[0], self.rel_devs[-1]
        if not lo - 1e-15 <= rel_dev <= hi + 1e-15:
            raise DomainError(f"rel_dev {rel_dev} outside calibrated range [{lo}, {hi}]")
        k = bisect.bisect_left(self.rel_devs, rel_dev)
        if k < len(self.rel_devs) and math.isclose(self.rel_devs[k], rel_dev, abs_tol=1e-15):
            return self.entries[k]
        a, b = self.entries[k - 1], self.entries[k]
        w = (rel_dev - self.rel_devs[k - 1]) / (self.rel_devs[k] - self.rel_devs[k - 1])
        mix = lambda x, y: (1 - w) * x + w * y  # noqa: E731
        return MikadoCalibration(a.alpha, a.beta, mix(a.delta_alpha, b.delta_alpha),
                                 mix(a.delta_beta, b.delta_beta), mix(a.delta_theta, b.delta_theta))


@dataclass(frozen=True)
class CompositeGate:
    target: EulerAngles
    calibration: MikadoCalibration
    corrected: tuple
    branch: str
    s: int

    def unitary(self) -> np.ndarray:
        """Ideal 2x2 product of the five segments."""
        t1, t2, t3 = self.corrected
        cal = self.calibration
        return rz(t3) @ cal.rotation(-1) @ rz(t2) @ cal.rotation(1) @ rz(t1)

    def j_uni(self) -> float:
        return 2 / 3 * projective_infidelity(self.unitary(), self.target.matrix())


def exact_branch_ok(target: EulerAngles, cal: MikadoCalibration) -> bool:
    return math.cos(target.theta2 / 2) ** 2 - math.sin(cal.delta_theta) ** 2 > 0


def _exact_angles(tg: EulerAngles, cal: MikadoCalibration, s: int):
    a, da, b, db, dth = cal.alpha, cal.delta_alpha, cal.beta, cal.delta_beta, cal.delta_theta
    half = math.sin(tg.theta2 / 2)
    root = math.sqrt(math.cos(tg.theta2 / 2) ** 2 - math.sin(dth) ** 2)
    lean = s * math.atan(half * math.sin(dth) / root)
    t1 = tg.theta1 - a - da + lean + math.pi / 2 * (s - 1)
    t2 = 2 * s * math.atan(half / root) - a - da - b - db
    t3 = tg.theta3 - b - db + lean - math.pi / 2 * (s - 1)
    return t1, t2, t3


def _fallback_angles(tg: EulerAngles, cal: MikadoCalibration):
    """Best of the four +-pi/2 outer-angle choices when no exact solution exists."""
    a, da, b, db = cal.alpha, cal.delta_alpha, cal.beta, cal.delta_beta
    t2 = math.pi - a - da - b - db
    best = None
    for s1 in (1, -1):
        for s3 in (1, -1):
            ang = (tg.theta1 - a - da + s1 * math.pi / 2, t2, tg.theta3 - b - db + s3 * math.pi / 2)
            err = CompositeGate(tg, cal, ang, "fallback", 1).j_uni()
            if best is None or err < best[0] - 1e-15:
                best = (err, ang)
    return best[1]


def corrected_angles(target: EulerAngles, cal: MikadoCalibration, s: int = 1) -> CompositeGate:
    """Corrected z angles; exact branch when the radicand is positive, else fallback."""
    if s not in (1, -1):
        raise InvalidParameterError(f"s must be +1 or -1, got {s}")
    if exact_branch_ok(target, cal):
        ang = _exact_angles(target, cal, s)
        return CompositeGate(target, cal, tuple(_wrap(x) for x in ang), "exact", s)
    ang = _fallback_angles(target, cal)
    return CompositeGate(target, cal, tuple(_wrap(x) for x in ang), "fallback", s)


@dataclass
class GateProgram:
    """Five-segment program for one site; the second pulse carries an extra pi phase."""

    gate: CompositeGate
    pulse: PulseShape
    segments: list = field(default_factory=list)

    def to_json(self) -> dict:
        ref = self.pulse.content_hash()
        out = []
        for seg in self.segments:
            if isinstance(seg, ZRotation):
                out.append({"type": "z", "angle": seg.angle})
            else:
                out.append({"type": "pulse", "pulse_ref": ref, "phase_offset": seg.phase_offset})
        return {"segments": out, "branch": self.gate.branch, "s": self.gate.s,
                "calibration": self.gate.calibration.to_dict(),
                "target": [self.gate.target.theta1, self.gate.target.theta2, self.gate.target.theta3]}


def assemble(U_g: np.ndarray, cal: MikadoCalibration, pulse: PulseShape, s: int = 1) -> GateProgram:
    gate = corrected_angles(euler_zyz(U_g), cal, s)
    t1, t2, t3 = gate.corrected
    segs = [ZRotation(t1), pulse, ZRotation(t2), pulse.shifted(math.pi), ZRotation(t3)]
    return GateProgram(gate, pulse, segs)


def principal_sqrt(U: np.ndarray) -> np.ndarray:
    """Half-angle rotation V with V V = U up to global phase."""
    V = np.asarray(U, dtype=complex)
    V = V / np.sqrt(np.linalg.det(V))
    if np.trace(V).real < 0:
        V = -V
    c = np.trace(V).real / 2
    half = math.acos(max(-1.0, min(1.0, c)))
    if half < 1e-15:
        return np.eye(2, dtype=complex)
    gen = (V - c * np.eye(2)) / (-1j * math.sin(half))
    return math.cos(half / 2) * np.eye(2) - 1j * math.sin(half / 2) * gen


def assemble_split(U_g: np.ndarray, cal: MikadoCalibration, pulse: PulseShape, s: int = 1):
    """Two composites of the half-angle gate; keeps both on the exact branch for pi rotations."""
    half = principal_sqrt(U_g)
    a = assemble(half, cal, pulse, s)
    b = assemble(half, cal, pulse, s)
    return [a, b]


def program_segments(programs) -> list:
    if isinstance(programs, GateProgram):
        return list(programs.segments)
    return [seg for p in programs for seg in p.segments]


def verify_composite(programs, params: SystemParams, U_g: np.ndarray,
                     cfg: PropagationConfig | None = None, rel_dev: float = 0.0) -> ProcessResult:
    """Full joint propagation of the program(s) and tomography against U_g."""
    p = apply_intensity_deviation(params, rel_dev)
    U = evolve_sequence(program_segments(programs), p, cfg)
    if U.shape[0] != p.dim:
        from dataclasses import replace
        p = replace(p, n_fock=U.shape[0] // 2)
    return process_tomography(U, p, U_g)


def calibrate_pulse(pulse: PulseShape, params: SystemParams, rel_dev: float = 0.0,
                    alpha: float | None = None, beta: float | None = None,
                    cfg: PropagationConfig | None = None) -> MikadoCalibration:
    """Calibration from the dominant Kraus operator of the simulated pulse."""
    from .propagator import evolve
    p = apply_intensity_deviation(params, rel_dev)
    U = evolve(pulse, p, cfg)
    if U.shape[0] != p.dim:
        from dataclasses import replace
        p = replace(p, n_fock=U.shape[0] // 2)
    res = process_tomography(U, p, mikado_mode=True)
    return MikadoCalibration.from_unitary(res.kraus_ops[0], alpha, beta)
