"""Gradient-based search over Fourier phase coefficients.

The cost is J = w_ent J_ent + w_uni J_uni + w_mot J_mot, averaged over an
optional grid of intensity deviations. Gradients are exact adjoints of the
midpoint propagator (see ``StepTable.phase_gradient``); a central-difference
mode is kept for cross-checks.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .errors import InvalidParameterError, TruncationError
from .model import SystemParams, apply_intensity_deviation
from .propagator import (FOCK_ESCALATION, LEAKAGE_LIMIT, PropagationConfig, StepTable, evolve,
                         top_population)
from .pulse import DEFAULT_N_C, PulseShape
from .tomography import CostWeights, ProcessResult, process_tomography, weighted_cost

log = logging.getLogger(__name__)

CONVERGENCE_RTOL = 1e-3


def mikado_grid(n: int = 11, half_width: float = 0.025) -> tuple[float, ...]:
    return tuple(float(x) for x in np.linspace(-half_width, half_width, n))


@dataclass(frozen=True)
class OptimizeConfig:
    duration: float
    target: np.ndarray | None = None
    mikado: bool = False
    weights: CostWeights = field(default_factory=CostWeights)
    n_c: int = DEFAULT_N_C
    restarts: int = 4
    max_iterations: int = 200
    seed: int = 0
    intensity_grid: tuple = ()
    init_amplitude: float = 0.05
    n_steps: int | None = None
    gradient: str = "analytic"
    fd_step: float = 1e-6
    jobs: int = 1

    def __post_init__(self):
        if not self.duration > 0:
            raise InvalidParameterError(f"duration must be > 0, got {self.duration}")
        if self.n_c < 1 or self.restarts < 1 or self.max_iterations < 1:
            raise InvalidParameterError("n_c, restarts and max_iterations must be positive")
        grid = tuple(float(x) for x in self.intensity_grid)
        if grid and not np.allclose(sorted(grid), sorted(-x for x in grid), atol=1e-15):
            raise InvalidParameterError("intensity grid must be symmetric about 0")
        object.__setattr__(self, "intensity_grid", grid)
        if self.mikado:
            object.__setattr__(self, "target", None)
        elif self.target is None:
            raise InvalidParameterError("a target unitary is required unless mikado is set")
        else:
            tgt = np.asarray(self.target, dtype=complex)
            if tgt.shape != (2, 2) or np.abs(tgt.conj().T @ tgt - np.eye(2)).max() > 1e-10:
                raise InvalidParameterError("target must be a 2x2 unitary")
            object.__setattr__(self, "target", tgt)
        if self.gradient not in ("analytic", "fd"):
            raise InvalidParameterError(f"gradient must be 'analytic' or 'fd', got {self.gradient!r}")

    @property
    def deviations(self) -> tuple[float, ...]:
        return self.intensity_grid or (0.0,)

    def steps(self, params: SystemParams) -> int:
        return PropagationConfig(n_steps=self.n_steps).steps_for(self.duration, params)


class CostEvaluator:
    """Cost and coefficient gradient for one configuration.

    Holds one step table per intensity grid point. A leakage-guard trip
    enlarges that point's Fock cutoff once for the rest of the run.
    """

    def __init__(self, cfg: OptimizeConfig, params: SystemParams):
        self.cfg = cfg
        self.n_steps = cfg.steps(params)
        self.points = [apply_intensity_deviation(params, d) for d in cfg.deviations]
        self.tables = [self._table(p) for p in self.points]
        self.escalated = [False] * len(self.points)
        self.basis = self.tables[0].basis(cfg.n_c)
        self.n_evals = 0

    def _table(self, p: SystemParams) -> StepTable:
        return StepTable(p, self.cfg.duration, self.n_steps)

    def _escalate(self, i: int):
        if self.escalated[i]:
            raise TruncationError(f"leakage persists at n_fock={self.points[i].n_fock}")
        bigger = replace(self.points[i], n_fock=self.points[i].n_fock + FOCK_ESCALATION)
        log.warning("leakage guard: grid point %d escalated to n_fock=%d", i, bigger.n_fock)
        self.points[i], self.tables[i] = bigger, self._table(bigger)
        self.escalated[i] = True

    def _point(self, i: int, phases: np.ndarray, gradient: bool):
        table, p = self.tables[i], self.points[i]
        if gradient:
            Q, U = table.products(phases)
        else:
            Q, U = None, table.unitary(phases)
        if top_population(U, p.n_thermal_max) > LEAKAGE_LIMIT:
            self._escalate(i)
            return self._point(i, phases, gradient)
        J, comps, gamma = weighted_cost(U, p, self.cfg.weights, self.cfg.target,
                                        mikado=self.cfg.mikado, gradient=gradient)
        dphi = table.phase_gradient(Q, U, gamma) if gradient else None
        return J, comps, dphi

    def __call__(self, x: np.ndarray, gradient: bool = True):
        """(J, components, dJ/dx or None), averaged over the grid."""
        self.n_evals += 1
        phases = self.basis @ x
        total, comps, dphi = 0.0, {"j_ent": 0.0, "j_uni": 0.0, "j_mot": 0.0}, np.zeros_like(phases)
        n = len(self.points)
        analytic = gradient and self.cfg.gradient == "analytic"
        for i in range(n):
            J, c, g = self._point(i, phases, analytic)
            total += J / n
            for k in comps:
                comps[k] += c[k] / n
            if analytic:
                dphi += g / n
        if not gradient:
            return total, comps, None
        if analytic:
            return total, comps, self.basis.T @ dphi
        return total, comps, self.fd_gradient(x)

    def fd_gradient(self, x: np.ndarray, h: float | None = None) -> np.ndarray:
        h = self.cfg.fd_step if h is None else h
        g = np.empty_like(x)
        for k in range(len(x)):
            e = np.zeros_like(x)
            e[k] = h
            g[k] = (self(x + e, gradient=False)[0] - self(x - e, gradient=False)[0]) / (2 * h)
        return g


def cost(pulse: PulseShape, params: SystemParams, cfg: OptimizeConfig) -> tuple[float, dict]:
    """Grid-averaged weighted cost of a given pulse."""
    if not pulse.is_constant and pulse.n_c == cfg.n_c and pulse.phase_offset == 0 \
            and math.isclose(pulse.duration, cfg.duration):
        J, comps, _ = CostEvaluator(cfg, params)(pulse.coefficients, gradient=False)
        return J, comps
    prop = PropagationConfig(n_steps=cfg.n_steps)
    total, comps = 0.0, {"j_ent": 0.0, "j_uni": 0.0, "j_mot": 0.0}
    devs = cfg.deviations
    for d in devs:
        p = apply_intensity_deviation(params, d)
        U = evolve(pulse, p, prop)
        if U.shape[0] != p.dim:
            p = replace(p, n_fock=U.shape[0] // 2)
        J, c, _ = weighted_cost(U, p, cfg.weights, cfg.target, mikado=cfg.mikado, gradient=False)
        total += J / len(devs)
        for k in comps:
            comps[k] += c[k] / len(devs)
    return total, comps


@dataclass
class RestartOutcome:
    index: int
    x: np.ndarray
    J: float
    history: list
    converged: bool
    message: str
    n_evals: int


def _restart(cfg: OptimizeConfig, params: SystemParams, index: int, seed_seq) -> RestartOutcome:
    rng = np.random.default_rng(seed_seq)
    ev = CostEvaluator(cfg, params)
    x0 = rng.uniform(-cfg.init_amplitude, cfg.init_amplitude, 2 * cfg.n_c)
    memo: dict[bytes, tuple] = {}

    def fun(x):
        J, comps, g = ev(x)
        memo.clear()
        memo[x.tobytes()] = (J, comps)
        return J, g

    history = []
    J0, c0, _ = ev(x0, gradient=False)
    history.append({"iteration": 0, "J": J0, **c0})

    def callback(xk):
        hit = memo.get(np.asarray(xk).tobytes())
        J, comps = hit if hit is not None else ev(xk, gradient=False)[:2]
        history.append({"iteration": len(history), "J": J, **comps})

    res = minimize(fun, x0, jac=True, method="BFGS", callback=callback,
                   options={"maxiter": cfg.max_iterations, "gtol": 1e-12})
    Js = [h["J"] for h in history]
    converged = bool(res.success) or len(Js) < 2 or \
        abs(Js[-2] - Js[-1]) <= CONVERGENCE_RTOL * abs(Js[-1])
    return RestartOutcome(index, np.asarray(res.x), float(res.fun), history,
                          converged, str(res.message), ev.n_evals)


def _run_restarts(cfg: OptimizeConfig, params: SystemParams) -> list[RestartOutcome]:
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    if cfg.jobs > 1 and cfg.restarts > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, cfg.restarts)) as pool:
            futs = [pool.submit(_restart, cfg, params, i, s) for i, s in enumerate(seeds)]
            return [f.result() for f in futs]
    return [_restart(cfg, params, i, s) for i, s in enumerate(seeds)]


def _convergence_log(outcomes: list[RestartOutcome]) -> list[dict]:
    rows, best = [], math.inf
    for out in outcomes:
        for h in out.history:
            best = min(best, h["J"])
            rows.append({"restart": out.index, **h, "best_J": best})
    return rows


@dataclass
class OptimizationResult:
    pulse: PulseShape
    result: ProcessResult
    log: list
    converged: bool
    below_qsl: bool
    J: float
    grid_results: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.pulse, self.result, self.log))

    @property
    def flags(self) -> list[str]:
        out = []
        if self.below_qsl:
            out.append("below-QSL")
        if not self.converged:
            out.append("non-converged")
        return out


def _optimize(cfg: OptimizeConfig, params: SystemParams):
    outcomes = _run_restarts(cfg, params)
    best = min(outcomes, key=lambda o: (o.J, o.index))
    pulse = PulseShape.from_coefficients(cfg.duration, best.x)
    below = cfg.duration <= 2 * math.pi / params.omega_trap
    if below:
        log.info("duration %.3g s is at or below the trap period; tagging as below-QSL", cfg.duration)
    converged = any(o.converged for o in outcomes)
    if not converged:
        log.warning("no restart met the relative convergence criterion %.0e", CONVERGENCE_RTOL)
    return pulse, best, _convergence_log(outcomes), converged, below


def _tomography_at(pulse, params, cfg, dev):
    p = apply_intensity_deviation(params, dev)
    U = evolve(pulse, p, PropagationConfig(n_steps=cfg.n_steps))
    if U.shape[0] != p.dim:
        p = replace(p, n_fock=U.shape[0] // 2)
    return process_tomography(U, p, cfg.target, mikado_mode=cfg.mikado)


def optimize_recoil_free(cfg: OptimizeConfig, params: SystemParams) -> OptimizationResult:
    """Best-of-restarts recoil-free pulse for a fixed target."""
    if cfg.mikado:
        raise InvalidParameterError("use optimize_mikado for Mikado configurations")
    pulse, best, rows, converged, below = _optimize(cfg, params)
    grid = [(_d, _tomography_at(pulse, params, cfg, _d)) for _d in cfg.deviations]
    nominal = dict(grid).get(0.0, grid[len(grid) // 2][1])
    return OptimizationResult(pulse, nominal, rows, converged, below, best.J, grid)


@dataclass
class MikadoResult(OptimizationResult):
    alpha: float = 0.0
    beta: float = 0.0
    deviations: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.pulse, [r for _, r in self.grid_results], (self.alpha, self.beta)))

    def averages(self) -> dict:
        rs = [r for _, r in self.grid_results]
        return {k: float(np.mean([getattr(r, k) for r in rs])) for k in ("j_ent", "j_uni", "j_mot")}


def mikado_deviations(grid_results, alpha: float, beta: float) -> list[dict]:
    rows = []
    for d, r in grid_results:
        m = r.mikado
        rows.append({"rel_dev": d,
                     "delta_alpha": _wrap(m["alpha"] - alpha),
                     "delta_beta": _wrap(m["beta"] - beta),
                     "delta_theta": m["delta_theta"]})
    return rows


def _wrap(x: float) -> float:
    return math.remainder(x, 2 * math.pi)


def optimize_mikado(cfg: OptimizeConfig, params: SystemParams) -> MikadoResult:
    """Robust Mikado pulse over the intensity grid, with nominal loose angles."""
    if not cfg.mikado:
        cfg = replace(cfg, mikado=True)
    if not cfg.intensity_grid:
        raise InvalidParameterError("Mikado optimization needs a nonempty intensity grid")
    pulse, best, rows, converged, below = _optimize(cfg, params)
    grid = [(d, _tomography_at(pulse, params, cfg, d)) for d in cfg.deviations]
    nominal = min(grid, key=lambda g: abs(g[0]))[1]
    alpha, beta = nominal.mikado["alpha"], nominal.mikado["beta"]
    return MikadoResult(pulse, nominal, rows, converged, below, best.J, grid,
                        alpha=alpha, beta=beta, deviations=mikado_deviations(grid, alpha, beta))
