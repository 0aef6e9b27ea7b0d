"""Phase-modulated drive pulses.

phi(t) = mask(t) * sum_n [a_n cos(n pi t / T) + b_n sin(n pi t / T)] + offset

The offset is a frame rotation and is never masked.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError

DEFAULT_N_C = 50


def _in_range(t, T):
    t = np.asarray(t, dtype=float)
    tol = 1e-12 * T
    if np.any(t < -tol) or np.any(t > T + tol):
        raise DomainError(f"time outside [0, {T}]")
    return np.clip(t, 0.0, T)


def mask(t, T: float):
    """Raised-cosine ramps over the first and last tenth of the pulse."""
    t = _in_range(t, T)
    # (1 - cos(10 pi t / T)) / 2 rises on the first tenth and falls on the last
    ramp = 0.5 * (1 - np.cos(10 * np.pi * t / T))
    out = np.where((t < T / 10) | (t > 9 * T / 10), ramp, 1.0)
    return out if out.ndim else float(out)


def fourier_basis(t, T: float, n_c: int) -> np.ndarray:
    """Masked basis columns [cos(n pi t/T)]_n=1..N then [sin(n pi t/T)]_n=1..N.

    Returns shape (len(t), 2 n_c) so that phi = basis @ concat(a, b) + offset.
    """
    t = np.atleast_1d(_in_range(t, T))
    n = np.arange(1, n_c + 1)
    arg = np.pi * np.outer(t, n) / T
    mu = np.atleast_1d(mask(t, T))[:, None]
    return np.hstack([np.cos(arg) * mu, np.sin(arg) * mu])


@dataclass(frozen=True)
class PulseShape:
    duration: float
    a: tuple = field(default=())
    b: tuple = field(default=())
    constant_phase: float | None = None
    phase_offset: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise DomainError(f"duration must be > 0, got {self.duration}")
        a = tuple(float(x) for x in self.a)
        b = tuple(float(x) for x in self.b)
        if len(a) != len(b):
            raise ValueError(f"coefficient lengths differ: {len(a)} vs {len(b)}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n_c(self) -> int:
        return len(self.a)

    @property
    def is_constant(self) -> bool:
        return self.constant_phase is not None

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate([self.a, self.b])

    @classmethod
    def from_coefficients(cls, duration: float, coeffs, phase_offset: float = 0.0) -> "PulseShape":
        coeffs = np.asarray(coeffs, dtype=float)
        half = coeffs.size // 2
        return cls(duration, tuple(coeffs[:half]), tuple(coeffs[half:]), None, phase_offset)

    @classmethod
    def zeros(cls, duration: float, n_c: int = DEFAULT_N_C) -> "PulseShape":
        return cls(duration, (0.0,) * n_c, (0.0,) * n_c)

    @classmethod
    def mossbauer(cls, duration: float, phase: float = 0.0) -> "PulseShape":
        return cls(duration, constant_phase=float(phase))

    def phase_at(self, t):
        t = _in_range(t, self.duration)
        if self.is_constant:
            out = np.full_like(t, self.constant_phase + self.phase_offset)
            return out if out.ndim else float(out)
        if self.n_c == 0:
            out = np.full_like(t, self.phase_offset)
            return out if out.ndim else float(out)
        out = fourier_basis(t, self.duration, self.n_c) @ self.coefficients + self.phase_offset
        return out if np.ndim(t) else float(out[0])

    def shifted(self, offset: float) -> "PulseShape":
        return shift_phase(self, offset)

    def to_dict(self) -> dict:
        d = {"duration_s": self.duration, "n_c": self.n_c, "a": list(self.a), "b": list(self.b)}
        if self.is_constant:
            d["constant_phase"] = self.constant_phase
        d["phase_offset"] = self.phase_offset
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PulseShape":
        a, b = d.get("a", []), d.get("b", [])
        if "n_c" in d and (len(a) != d["n_c"] or len(b) != d["n_c"]):
            raise ValueError(f"n_c={d['n_c']} does not match coefficient lengths")
        return cls(float(d["duration_s"]), tuple(a), tuple(b),
                   d.get("constant_phase"), float(d.get("phase_offset", 0.0)))

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def phase_at(pulse: PulseShape, t):
    return pulse.phase_at(t)


def shift_phase(pulse: PulseShape, offset: float) -> PulseShape:
    return replace(pulse, phase_offset=pulse.phase_offset + float(offset))


def pi_half_duration(omega: float) -> float:
    """Duration of a constant-phase pi/2 rotation at Rabi frequency omega."""
    return math.pi / (2 * omega)
