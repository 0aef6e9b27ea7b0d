"""Randomized benchmarking with Haar-random SU(2) composite gates.

Three gate modes share one circuit driver:

* ``mikado`` and ``mossbauer`` propagate the full joint unitary of every
  composite gate (two simulated pulses, three ideal z rotations) and run
  process tomography of the accumulated circuit against the ideal product.
* ``idealized-L4`` keeps only the motional levels |0>, |1>. Both pulses are
  ideal on |0> and pick up the small entangling rotation R_ent on |1>.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .composite import MikadoCalibration, calibrate_pulse, corrected_angles, euler_zyz
from .core import PAULIS, SIGMA_Z, rx
from .errors import InvalidParameterError, TruncationError
from .model import SystemParams
from .propagator import FOCK_ESCALATION, LEAKAGE_LIMIT, PropagationConfig, evolve, top_population, z_rotation_diag
from .pulse import PulseShape
from .tomography import process_tomography

GATE_MODES = ("mikado", "mossbauer", "idealized-L4")
METRICS = ("j_ent", "j_uni", "j_mot")


@dataclass(frozen=True)
class RBConfig:
    depth_max: int
    n_circuits: int
    seed: int = 0
    p0: float = 0.99
    gate_mode: str = "mikado"
    record_depths: tuple = ()
    ent_vector: tuple = (math.pi / 4, 0.0, 0.0)   # Bloch vector of V_ent for idealized-L4
    jobs: int = 1

    def __post_init__(self):
        if self.depth_max < 1:
            raise InvalidParameterError(f"depth_max must be >= 1, got {self.depth_max}")
        if self.n_circuits < 1:
            raise InvalidParameterError(f"n_circuits must be >= 1, got {self.n_circuits}")
        if self.gate_mode not in GATE_MODES:
            raise InvalidParameterError(f"gate_mode must be one of {GATE_MODES}, got {self.gate_mode!r}")
        depths = tuple(int(d) for d in self.record_depths) or tuple(range(1, self.depth_max + 1))
        if list(depths) != sorted(set(depths)) or depths[0] < 1 or depths[-1] > self.depth_max:
            raise InvalidParameterError("record_depths must be strictly increasing within [1, depth_max]")
        object.__setattr__(self, "record_depths", depths)


@dataclass
class RBSeries:
    gate_mode: str
    records: list
    n_dropped: int = 0

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records])

    @property
    def depths(self) -> np.ndarray:
        return self.column("N")

    CSV_COLUMNS = ("N", "j_ent", "j_ent_se", "j_uni", "j_uni_se", "j_mot", "j_mot_se", "n_circuits_used")

    def rows(self):
        for r in self.records:
            yield {k: r[k] for k in self.CSV_COLUMNS}


def sample_haar_su2(rng: np.random.Generator) -> np.ndarray:
    """Haar-random SU(2) element from a uniform unit quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    return q[0] * PAULIS[0] - 1j * (q[1] * PAULIS[1] + q[2] * PAULIS[2] + q[3] * PAULIS[3])


def rotation_angle(U: np.ndarray) -> float:
    """Rotation angle in [0, 2 pi] of an SU(2) element, U = exp(-i theta n.sigma / 2)."""
    return 2 * math.acos(max(-1.0, min(1.0, float(np.trace(U).real) / 2)))


def rotation_axis(U: np.ndarray) -> np.ndarray:
    v = np.array([-np.trace(U @ s).imag / 2 for s in PAULIS[1:]])
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def entangling_rotation(eta: float, ent_vector) -> np.ndarray:
    """R_ent = exp(-i eta^2 B.sigma)."""
    B = np.asarray(ent_vector, dtype=float)
    b = float(np.linalg.norm(B))
    if b == 0:
        return np.eye(2, dtype=complex)
    n = np.einsum("i,ijk->jk", B / b, PAULIS[1:])
    return math.cos(eta**2 * b) * PAULIS[0] - 1j * math.sin(eta**2 * b) * n


def idealized_step(R_mik: np.ndarray, R_ent: np.ndarray) -> np.ndarray:
    """4x4 joint unitary R_mik (x) |0><0| + R_mik R_ent (x) |1><1|, qubit index slow."""
    U = np.zeros((2, 2, 2, 2), dtype=complex)
    U[:, 0, :, 0] = R_mik
    U[:, 1, :, 1] = R_mik @ R_ent
    return U.reshape(4, 4)


def _circuit_seeds(seed: int, n: int):
    return np.random.SeedSequence(seed).spawn(n)


@dataclass
class _Resources:
    """Everything a worker needs to run circuits: per-pulse joint unitaries and the calibration."""

    params: SystemParams
    calibration: MikadoCalibration
    plus: np.ndarray
    minus: np.ndarray
    weights: np.ndarray | None = None
    guard: bool = True
    extra: dict = field(default_factory=dict)


def _resources(cfg: RBConfig, params: SystemParams, calibration, pulse, prop_cfg):
    if cfg.gate_mode == "idealized-L4":
        R_ent = entangling_rotation(params.eta, cfg.ent_vector)
        shifted_ent = SIGMA_Z @ R_ent.conj().T @ SIGMA_Z
        cal = MikadoCalibration(0.0, 0.0)
        return _Resources(params, cal, idealized_step(rx(math.pi / 2), R_ent),
                          idealized_step(rx(-math.pi / 2), shifted_ent),
                          weights=np.array([cfg.p0, 1 - cfg.p0]), guard=False)
    if pulse is None or calibration is None:
        raise InvalidParameterError(f"gate_mode {cfg.gate_mode!r} needs a pulse and a calibration")
    plus = evolve(pulse, params, prop_cfg)
    minus = evolve(pulse.shifted(math.pi), params, prop_cfg)
    n = max(plus.shape[0], minus.shape[0]) // 2
    if n != params.n_fock:
        params = replace(params, n_fock=n)
        plus = evolve(pulse, params, prop_cfg)
        minus = evolve(pulse.shifted(math.pi), params, prop_cfg)
    return _Resources(params, calibration, plus, minus)


def _z(angle: float, n: int) -> np.ndarray:
    return z_rotation_diag(angle, n)[:, None]


def _run_circuit(args):
    """Metrics at each recorded depth for one circuit, or None when truncation trips."""
    res, cfg, seq = args
    rng = np.random.default_rng(seq)
    n = res.plus.shape[0] // 2
    U = np.eye(2 * n, dtype=complex)
    Uc = np.eye(2, dtype=complex)
    out = []
    record = set(cfg.record_depths)
    for N in range(1, cfg.depth_max + 1):
        Ug = sample_haar_su2(rng)
        t1, t2, t3 = corrected_angles(euler_zyz(Ug), res.calibration).corrected
        U = _z(t1, n) * U
        U = res.plus @ U
        U = _z(t2, n) * U
        U = res.minus @ U
        U = _z(t3, n) * U
        Uc = Ug @ Uc
        if N in record:
            p = None if res.weights is not None else res.params
            if res.guard and top_population(U, res.params.n_thermal_max) > LEAKAGE_LIMIT:
                return None
            r = process_tomography(U, p, Uc, weights=res.weights)
            vals = (r.j_ent, r.j_uni, r.j_mot)
            if not all(math.isfinite(v) for v in vals):
                return None
            out.append(vals)
    return out


def _escalated(res: _Resources, pulse, prop_cfg) -> _Resources:
    bigger = replace(res.params, n_fock=res.params.n_fock + FOCK_ESCALATION)
    return _Resources(bigger, res.calibration, evolve(pulse, bigger, prop_cfg),
                      evolve(pulse.shifted(math.pi), bigger, prop_cfg))


def run_rb(cfg: RBConfig, params: SystemParams, calibration: MikadoCalibration | None = None,
           pulse: PulseShape | None = None, prop_cfg: PropagationConfig | None = None) -> RBSeries:
    """Average J_ent, J_uni, J_mot over random circuits at each recorded depth.

    Each circuit draws from its own stream spawned from ``cfg.seed``, so the
    series does not depend on ``cfg.jobs``. A circuit whose top Fock levels
    fill up is retried once with a larger cutoff and dropped if that fails too.
    """
    if cfg.gate_mode != "idealized-L4":
        params = params.with_(p0=cfg.p0) if params.p0 != cfg.p0 else params
    res = _resources(cfg, params, calibration, pulse, prop_cfg)
    seeds = _circuit_seeds(cfg.seed, cfg.n_circuits)
    tasks = [(res, cfg, s) for s in seeds]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            results = list(ex.map(_run_circuit, tasks))
    else:
        results = [_run_circuit(t) for t in tasks]

    retry = [i for i, r in enumerate(results) if r is None]
    if retry and res.guard:
        big = _escalated(res, pulse, prop_cfg)
        for i in retry:
            results[i] = _run_circuit((big, cfg, seeds[i]))
    kept = [r for r in results if r is not None]
    dropped = len(results) - len(kept)
    if not kept:
        raise TruncationError("every circuit tripped the truncation guard")

    data = np.array(kept)          # (circuits, depths, metrics)
    m = len(kept)
    records = []
    for k, N in enumerate(cfg.record_depths):
        rec = {"N": N, "n_circuits_used": m}
        for j, name in enumerate(METRICS):
            col = data[:, k, j]
            rec[name] = float(col.mean())
            rec[name + "_se"] = float(col.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
        records.append(rec)
    return RBSeries(cfg.gate_mode, records, dropped)


def idealized_branch_deviation(cfg: RBConfig, params: SystemParams, circuit: int = 0) -> np.ndarray:
    """Deviation unitary of the |1> branch, Uc^dag U_11, after ``cfg.depth_max`` idealized gates."""
    res = _resources(replace(cfg, gate_mode="idealized-L4"), params, None, None, None)
    rng = np.random.default_rng(_circuit_seeds(cfg.seed, circuit + 1)[circuit])
    U = np.eye(4, dtype=complex)
    Uc = np.eye(2, dtype=complex)
    for _ in range(cfg.depth_max):
        Ug = sample_haar_su2(rng)
        t1, t2, t3 = corrected_angles(euler_zyz(Ug), res.calibration).corrected
        U = _z(t3, 2) * (res.minus @ (_z(t2, 2) * (res.plus @ (_z(t1, 2) * U))))
        Uc = Ug @ Uc
    block = U.reshape(2, 2, 2, 2)[:, 1, :, 1]
    return Uc.conj().T @ block


def mossbauer_pulse(params: SystemParams) -> PulseShape:
    """Constant-phase pi/2 pulse at the dressed Rabi frequency."""
    return PulseShape.mossbauer(math.pi / (2 * params.dressed_rabi))


def gate_resources(mode: str, params: SystemParams, mikado_pulse: PulseShape | None = None,
                   rel_dev: float = 0.0, alpha: float | None = None, beta: float | None = None,
                   prop_cfg: PropagationConfig | None = None):
    """(pulse, calibration) for a full-simulation gate mode."""
    if mode == "mossbauer":
        pulse = mossbauer_pulse(params)
        return pulse, calibrate_pulse(pulse, params, rel_dev, 0.0, 0.0, prop_cfg)
    if mode == "mikado":
        if mikado_pulse is None:
            raise InvalidParameterError("mikado mode needs an optimized pulse")
        return mikado_pulse, calibrate_pulse(mikado_pulse, params, rel_dev, alpha, beta, prop_cfg)
    raise InvalidParameterError(f"no simulated pulse for gate mode {mode!r}")
