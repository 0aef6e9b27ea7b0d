"""Command-line front end.

Exit codes: 0 success, 1 invalid input (config, arguments, files), 2 the run
finished but was flagged (non-converged optimization, dropped RB circuits).
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

# worker pools parallelise over tasks; threaded BLAS inside each worker only oversubscribes
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np  # noqa: E402

from . import __version__
from .artifacts import read_json, run_metadata, write_csv, write_json
from .config import PRESETS, ConfigError, RunConfig, load_config, preset, target_unitary
from .errors import RecoilFreeError
from .model import TWO_PI, apply_intensity_deviation
from .pulse import PulseShape

log = logging.getLogger("recoilfree")

CONVERGENCE_COLUMNS = ("restart", "iteration", "J", "j_ent", "j_uni", "j_mot", "best_J")
DURATION_COLUMNS = ("T_us", "J", "j_uni", "j_ent", "j_mot", "converged", "below_qsl")
P0_COLUMNS = ("p0", "J", "j_uni", "j_ent", "j_mot", "converged")
INTENSITY_COLUMNS = ("rel_dev", "j_uni", "j_ent", "j_mot", "delta_alpha", "delta_beta", "delta_theta")
GRID_COLUMNS = ("gate_mode", "theta_g", "rel_dev", "j_uni", "j_ent", "j_mot")
TRAJECTORY_COLUMNS = ("t_us", "x", "p")
RB_N_FOCK = 12


class UsageError(RecoilFreeError, ValueError):
    pass


# -- configuration assembly ----------------------------------------------------

def _cli_overrides(args) -> RunConfig:
    """Flags as a RunConfig layer; frequencies arrive in kHz, times in seconds."""
    cfg = RunConfig()
    s, p, o = cfg.system, cfg.pulse, cfg.optimize
    for flag, key in (("rabi_khz", "rabi"), ("trap_khz", "trap")):
        v = getattr(args, flag, None)
        if v is not None:
            s[key] = TWO_PI * 1e3 * v
    for flag in ("eta", "p0"):
        v = getattr(args, flag, None)
        if v is not None:
            s[flag] = v
    if getattr(args, "duration", None) is not None:
        p["duration"] = args.duration
    if getattr(args, "target", None) is not None:
        p["target"] = args.target
    if getattr(args, "mikado", False):
        p["mikado"] = True
    for flag in ("restarts", "max_iterations", "n_c"):
        v = getattr(args, flag, None)
        if v is not None:
            (p if flag == "n_c" else o)[flag] = v
    if args.seed is not None:
        cfg.run["seed"] = args.seed
    return cfg


def resolve_config(args) -> RunConfig:
    """Layers, later wins: sr88 system preset, --preset, --config file, flags."""
    cfg = preset("sr88")
    if getattr(args, "preset", None):
        cfg = cfg.merged(preset(args.preset))
    if args.config:
        cfg = cfg.merged(load_config(args.config))
    cfg = cfg.merged(_cli_overrides(args))
    cfg.run.setdefault("seed", 0)
    return cfg


def _inputs(args) -> list:
    out = [args.config] if args.config else []
    if getattr(args, "pulse", None):
        out.append(args.pulse)
    return out


def _meta(cfg: RunConfig, args) -> dict:
    return run_metadata(cfg.to_dict(), cfg.run["seed"], _inputs(args))


def _load_pulse(path) -> tuple[PulseShape, dict]:
    try:
        doc = read_json(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"{path}: cannot read pulse file ({exc})") from None
    body = doc.get("pulse", doc)
    try:
        return PulseShape.from_dict(body), doc
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: malformed pulse ({exc})") from None


def _optimize_config(cfg: RunConfig, jobs: int, duration: float | None = None):
    from .optimizer import OptimizeConfig, mikado_grid
    from .tomography import CostWeights

    p, o = cfg.pulse, cfg.optimize
    T = duration if duration is not None else cfg.require("pulse", "duration")
    mikado = bool(p.get("mikado", False))
    kw = dict(duration=T, mikado=mikado, seed=cfg.run["seed"], jobs=jobs)
    if not mikado:
        kw["target"] = target_unitary(cfg.require("pulse", "target"))
    else:
        kw["intensity_grid"] = mikado_grid(o.get("intensity_points", 11), o.get("intensity_half_width", 0.025))
    if "n_c" in p:
        kw["n_c"] = p["n_c"]
    for key in ("restarts", "max_iterations", "init_amplitude", "n_steps", "gradient"):
        if key in o:
            kw[key] = o[key]
    if any(k in o for k in ("w_ent", "w_uni", "w_mot")):
        d = CostWeights()
        kw["weights"] = CostWeights(o.get("w_ent", d.w_ent), o.get("w_uni", d.w_uni), o.get("w_mot", d.w_mot))
    return OptimizeConfig(**kw)


# -- commands ----------------------------------------------------------------------

def cmd_optimize(args) -> int:
    from .optimizer import optimize_mikado, optimize_recoil_free

    cfg = resolve_config(args)
    params = cfg.system_params()
    ocfg = _optimize_config(cfg, args.jobs)
    out = Path(args.out)
    res = optimize_mikado(ocfg, params) if ocfg.mikado else optimize_recoil_free(ocfg, params)
    meta = _meta(cfg, args)
    write_json(out / "pulse.json", {"pulse": res.pulse.to_dict(), "hash": res.pulse.content_hash()}, meta)
    write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS,
              ({k: r[k] for k in CONVERGENCE_COLUMNS} for r in res.log))
    payload = {"J": res.J, "converged": res.converged, "flags": res.flags,
               "nominal": res.result.to_dict(),
               "grid": [{"rel_dev": d, **r.to_dict()} for d, r in res.grid_results]}
    if ocfg.mikado:
        payload.update(alpha=res.alpha, beta=res.beta, deviations=res.deviations, averages=res.averages())
    write_json(out / "result.json", payload, meta)
    print(f"J = {res.J:.6g}  j_ent = {res.result.j_ent:.3g}  j_uni = {res.result.j_uni:.3g}  "
          f"j_mot = {res.result.j_mot:.3g}  flags = {','.join(res.flags) or 'none'}")
    return 0 if res.converged else 2


def _sweep_duration(cfg, args, params):
    from .optimizer import optimize_recoil_free
    sw = cfg.sweep
    ts = np.linspace(sw.get("t_min", 2e-6), sw.get("t_max", 30e-6), sw.get("points", 8))
    rows, ok = [], True
    for T in ts:
        r = optimize_recoil_free(_optimize_config(cfg, args.jobs, float(T)), params)
        ok &= r.converged
        rows.append({"T_us": float(T) * 1e6, "J": r.J, "j_uni": r.result.j_uni, "j_ent": r.result.j_ent,
                     "j_mot": r.result.j_mot, "converged": r.converged, "below_qsl": r.below_qsl})
    return DURATION_COLUMNS, rows, ok


def _sweep_p0(cfg, args, params):
    from .optimizer import optimize_recoil_free
    rows, ok = [], True
    for p0 in (0.90, 0.95, 0.99):
        r = optimize_recoil_free(_optimize_config(cfg, args.jobs), params.with_(p0=p0))
        ok &= r.converged
        rows.append({"p0": p0, "J": r.J, "j_uni": r.result.j_uni, "j_ent": r.result.j_ent,
                     "j_mot": r.result.j_mot, "converged": r.converged})
    return P0_COLUMNS, rows, ok


def _need_pulse(args) -> PulseShape:
    if not args.pulse:
        raise UsageError("this sweep needs --pulse (an optimized Mikado pulse JSON)")
    return _load_pulse(args.pulse)[0]


def _sweep_intensity(cfg, args, params):
    from .composite import calibrate_pulse
    from .optimizer import mikado_grid
    from .propagator import evolve
    from .tomography import process_tomography

    pulse = _need_pulse(args)
    o = cfg.optimize
    grid = mikado_grid(o.get("intensity_points", 11), o.get("intensity_half_width", 0.025))
    nominal = calibrate_pulse(pulse, params)
    rows = []
    for d in grid:
        p = apply_intensity_deviation(params, d)
        U = evolve(pulse, p)
        r = process_tomography(U, replace(p, n_fock=U.shape[0] // 2), mikado_mode=True)
        cal = calibrate_pulse(pulse, params, d, nominal.alpha, nominal.beta)
        rows.append({"rel_dev": d, "j_uni": r.j_uni, "j_ent": r.j_ent, "j_mot": r.j_mot,
                     "delta_alpha": cal.delta_alpha, "delta_beta": cal.delta_beta,
                     "delta_theta": cal.delta_theta})
    return INTENSITY_COLUMNS, rows, True


def gate_grid(params, mikado_pulse, thetas, rel_devs, modes=("mikado", "mossbauer")) -> list[dict]:
    """Composite R_x(theta_g) gates per mode and intensity deviation, fully simulated."""
    from .composite import assemble, verify_composite
    from .core import rx
    from .rb import gate_resources

    rows = []
    for mode in modes:
        base_pulse, base_cal = gate_resources(mode, params, mikado_pulse)
        for d in rel_devs:
            _, cal = gate_resources(mode, params, mikado_pulse, d, base_cal.alpha, base_cal.beta)
            for th in thetas:
                prog = assemble(rx(th), cal, base_pulse)
                r = verify_composite(prog, params, rx(th), rel_dev=d)
                rows.append({"gate_mode": mode, "theta_g": float(th), "rel_dev": float(d),
                             "j_uni": r.j_uni, "j_ent": r.j_ent, "j_mot": r.j_mot})
    return rows


def _sweep_theta_grid(cfg, args, params):
    pulse = _need_pulse(args)
    thetas = np.linspace(0, math.pi, 9)
    devs = np.linspace(-0.025, 0.025, 11)
    return GRID_COLUMNS, gate_grid(params, pulse, thetas, devs), True


SWEEPS = {"duration": _sweep_duration, "p0": _sweep_p0,
          "intensity": _sweep_intensity, "theta-grid": _sweep_theta_grid}


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    kind = args.kind or cfg.sweep.get("kind")
    if kind not in SWEEPS:
        raise UsageError(f"sweep kind must be one of {sorted(SWEEPS)}, got {kind!r}")
    params = cfg.system_params()
    columns, rows, ok = SWEEPS[kind](cfg, args, params)
    out = Path(args.out)
    write_csv(out / f"sweep_{kind}.csv", columns, rows)
    write_json(out / f"sweep_{kind}.json", {"kind": kind, "rows": rows}, _meta(cfg, args))
    return 0 if ok else 2


def cmd_benchmark(args) -> int:
    from .rb import RBConfig, RBSeries, gate_resources, run_rb

    cfg = resolve_config(args)
    rb = cfg.rb
    mode = args.mode or rb.get("mode", "idealized-L4")
    p0 = args.p0 if args.p0 is not None else rb.get("p0", cfg.system.get("p0", 0.99))
    depth = args.depth or rb.get("depth", 1000 if mode == "idealized-L4" else 100)
    circuits = args.circuits or rb.get("circuits", 100 if mode == "idealized-L4" else 20)
    every = args.record_every or rb.get("record_every", 1)
    record = tuple(sorted(set(range(every, depth + 1, every)) | {1, depth}))
    params = cfg.system_params().with_(p0=p0)
    if mode != "idealized-L4" and "n_fock" not in cfg.system and params.n_thermal_max < RB_N_FOCK:
        params = replace(params, n_fock=RB_N_FOCK)
    try:
        rcfg = RBConfig(depth, circuits, cfg.run["seed"], p0, mode, record, jobs=args.jobs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    pulse = cal = None
    if mode != "idealized-L4":
        mik = _load_pulse(args.pulse)[0] if mode == "mikado" and args.pulse else None
        if mode == "mikado" and mik is None:
            raise UsageError("benchmark --mode mikado needs --pulse")
        pulse, cal = gate_resources(mode, params, mik)
    series = run_rb(rcfg, params, cal, pulse)
    out = Path(args.out)
    write_csv(out / f"rb_{mode}.csv", RBSeries.CSV_COLUMNS, series.rows())
    write_json(out / f"rb_{mode}.json", {"gate_mode": mode, "records": series.records,
                                        "n_dropped": series.n_dropped}, _meta(cfg, args))
    return 0 if series.n_dropped == 0 else 2


def cmd_analyze(args) -> int:
    from .oracles import BlochInit, semiclassical_trajectory
    from .perturbation import expansion_report
    from .propagator import evolve
    from .tomography import process_tomography

    cfg = resolve_config(args)
    params = cfg.system_params()
    if args.pulse:
        pulse = _load_pulse(args.pulse)[0]
    else:
        pulse = PulseShape.zeros(cfg.require("pulse", "duration"), cfg.pulse.get("n_c", 50))
    init = BlochInit(args.init_theta, args.init_phi)
    t = np.linspace(0.0, pulse.duration, args.points)
    traj = semiclassical_trajectory(pulse, params, init, t)
    out = Path(args.out)
    write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS,
              ({"t_us": ti * 1e6, "x": float(x), "p": float(p)} for ti, (x, p) in zip(t, traj)))
    meta = _meta(cfg, args)
    report = expansion_report(pulse, params)
    write_json(out / "expansion.json", report.to_dict(), meta)
    U = evolve(pulse, params)
    target = cfg.pulse.get("target")
    tomo = process_tomography(U, replace(params, n_fock=U.shape[0] // 2),
                              target_unitary(target) if target else None, mikado_mode=target is None)
    write_json(out / "tomography.json", tomo.to_dict(), meta)
    n1, n2 = report.recoil_norms
    print(f"|V_rec1| = {n1:.4g}  |V_rec2| = {n2:.4g}  |B(V_ent2)| = {report.bloch_len_v_ent2:.6g}")
    return 0


def cmd_tomography(args) -> int:
    from .propagator import evolve
    from .tomography import process_tomography

    cfg = resolve_config(args)
    params = apply_intensity_deviation(cfg.system_params(), args.rel_dev)
    if not args.pulse:
        raise UsageError("tomography needs --pulse")
    pulse = _load_pulse(args.pulse)[0]
    U = evolve(pulse, params)
    target = args.target or cfg.pulse.get("target")
    r = process_tomography(U, replace(params, n_fock=U.shape[0] // 2),
                           target_unitary(target) if target else None, mikado_mode=target is None)
    write_json(Path(args.out) / "tomography.json", {"rel_dev": args.rel_dev, **r.to_dict()}, _meta(cfg, args))
    return 0


# -- parser ----------------------------------------------------------------------

def _shared(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file with unit-suffixed keys")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--preset", choices=PRESETS)


def _physics(p: argparse.ArgumentParser):
    p.add_argument("--rabi-khz", type=float, dest="rabi_khz")
    p.add_argument("--trap-khz", type=float, dest="trap_khz")
    p.add_argument("--eta", type=float)
    p.add_argument("--p0", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="recoilfree", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="optimize a recoil-free or Mikado pulse")
    _shared(p)
    _physics(p)
    p.add_argument("--duration", type=float, help="pulse duration in seconds")
    p.add_argument("--target", help="target gate name, e.g. rx90")
    p.add_argument("--mikado", action="store_true")
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iterations", type=int, dest="max_iterations")
    p.add_argument("--n-c", type=int, dest="n_c")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="parameter sweeps as CSV")
    _shared(p)
    _physics(p)
    p.add_argument("--kind", choices=sorted(SWEEPS))
    p.add_argument("--pulse", help="pulse JSON for intensity and theta-grid sweeps")
    p.add_argument("--duration", type=float)
    p.add_argument("--target")
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iterations", type=int, dest="max_iterations")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("benchmark", help="randomized benchmarking")
    _shared(p)
    _physics(p)
    p.add_argument("--mode", choices=("mikado", "mossbauer", "idealized-L4"))
    p.add_argument("--depth", type=int)
    p.add_argument("--circuits", type=int)
    p.add_argument("--record-every", type=int, dest="record_every")
    p.add_argument("--pulse")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("analyze", help="trajectory, expansion and tomography of one pulse")
    _shared(p)
    _physics(p)
    p.add_argument("--pulse", help="pulse JSON; omit for the zero-phase pulse of --duration")
    p.add_argument("--duration", type=float)
    p.add_argument("--target")
    p.add_argument("--init-theta", type=float, default=math.pi / 2, dest="init_theta")
    p.add_argument("--init-phi", type=float, default=0.0, dest="init_phi")
    p.add_argument("--points", type=int, default=401)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("tomography", help="process tomography of one pulse")
    _shared(p)
    _physics(p)
    p.add_argument("--pulse")
    p.add_argument("--target")
    p.add_argument("--rel-dev", type=float, default=0.0, dest="rel_dev")
    p.set_defaults(func=cmd_tomography)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RecoilFreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
