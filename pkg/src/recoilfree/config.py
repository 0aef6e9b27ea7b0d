"""Run configuration: INI files with unit-suffixed keys, plus built-in presets.

Every physical quantity must carry its unit in the key name, for example
``rabi_khz = 20`` or ``duration_us = 15``. Values are converted to SI and
angular frequency on load; nothing downstream sees Hz.

    [system]
    rabi_khz = 20
    trap_khz = 100
    eta = 0.22
    p0 = 0.95

    [pulse]
    duration_us = 15
    target = rx90
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import rx, ry, rz
from .errors import RecoilFreeError
from .model import TWO_PI, SystemParams, sr88_mikado_duration, sr88_params


class ConfigError(RecoilFreeError, ValueError):
    """Invalid configuration; ``str()`` names the file, line and field."""


_UNITS = {
    "frequency": {"hz": TWO_PI, "khz": TWO_PI * 1e3, "mhz": TWO_PI * 1e6},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6},
    "angle": {"rad": 1.0, "deg": math.pi / 180},
}

# section -> field -> kind; kind is a unit family, or a plain python type
SCHEMA = {
    "system": {"rabi": "frequency", "trap": "frequency", "detuning": "frequency", "eta": float,
               "p0": float, "probe_shift_coeff": float, "n_fock": int},
    "pulse": {"duration": "time", "n_c": int, "target": str, "mikado": bool, "phase": "angle"},
    "optimize": {"restarts": int, "max_iterations": int, "w_ent": float, "w_uni": float,
                 "w_mot": float, "init_amplitude": float, "n_steps": int,
                 "intensity_half_width": float, "intensity_points": int, "gradient": str},
    "rb": {"mode": str, "depth": int, "circuits": int, "p0": float, "record_every": int},
    "sweep": {"kind": str, "points": int, "t_min": "time", "t_max": "time"},
    "run": {"seed": int},
}

TARGETS = {
    "identity": np.eye(2, dtype=complex),
    "rx90": rx(math.pi / 2), "rx180": rx(math.pi), "rxm90": rx(-math.pi / 2),
    "ry90": ry(math.pi / 2), "ry180": ry(math.pi),
    "rz90": rz(math.pi / 2),
}


def target_unitary(name: str) -> np.ndarray:
    try:
        return TARGETS[name]
    except KeyError:
        raise ConfigError(f"unknown target {name!r}; choose from {sorted(TARGETS)}") from None


@dataclass
class RunConfig:
    """Resolved, SI-valued settings; ``sources`` maps (section, field) to 'file:line'."""

    system: dict = field(default_factory=dict)
    pulse: dict = field(default_factory=dict)
    optimize: dict = field(default_factory=dict)
    rb: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    sources: dict = field(default_factory=dict, repr=False)

    def section(self, name: str) -> dict:
        return getattr(self, name)

    def merged(self, other: "RunConfig") -> "RunConfig":
        """``other`` wins field by field."""
        out = RunConfig(sources={**self.sources, **other.sources})
        for name in SCHEMA:
            out.section(name).update(self.section(name))
            out.section(name).update(other.section(name))
        return out

    def to_dict(self) -> dict:
        return {name: dict(self.section(name)) for name in SCHEMA if self.section(name)}

    def where(self, section: str, name: str) -> str:
        return self.sources.get((section, name), f"[{section}] {name}")

    def system_params(self) -> SystemParams:
        s = self.system
        missing = [k for k in ("rabi", "trap", "eta") if k not in s]
        if missing:
            raise ConfigError(f"[system] missing required field(s): {', '.join(missing)}")
        kw = dict(omega_rabi=s["rabi"], omega_trap=s["trap"], eta=s["eta"])
        for key, name in (("p0", "p0"), ("probe_shift_coeff", "probe_shift_coeff"),
                          ("detuning", "detuning"), ("n_fock", "n_fock")):
            if key in s:
                kw[name] = s[key]
        try:
            return SystemParams(**kw)
        except ValueError as exc:
            raise ConfigError(f"[system] {exc}") from None

    def require(self, section: str, name: str):
        sec = self.section(section)
        if name not in sec:
            raise ConfigError(f"[{section}] missing required field: {name}")
        return sec[name]


def _split_key(key: str, section: str):
    fields = SCHEMA[section]
    if key in fields:
        kind = fields[key]
        if isinstance(kind, str):
            raise ConfigError(f"{key!r} needs a unit suffix ({', '.join(_UNITS[kind])})")
        return key, kind, None
    base, _, suffix = key.rpartition("_")
    kind = fields.get(base)
    if not isinstance(kind, str):
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    if suffix not in _UNITS[kind]:
        raise ConfigError(f"{key!r}: unit {suffix!r} is not a {kind} unit ({', '.join(_UNITS[kind])})")
    return base, kind, _UNITS[kind][suffix]


def _convert(raw: str, kind, scale):
    if scale is not None:
        return float(raw) * scale
    if kind is bool:
        low = raw.strip().lower()
        if low not in ("true", "false", "yes", "no", "1", "0"):
            raise ValueError(f"not a boolean: {raw!r}")
        return low in ("true", "yes", "1")
    return kind(raw.strip())


def _line_index(text: str) -> dict:
    index, section = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), n)
            continue
        m = re.match(r"\s*([A-Za-z0-9_]+)\s*[=:]", line)
        if m and section:
            index[(section, m.group(1).lower())] = n
    return index


def parse_config(text: str, origin: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    lines = _line_index(text)
    cfg = RunConfig()
    for section in parser.sections():
        where = f"{origin}:{lines.get((section, None), '?')}"
        if section not in SCHEMA:
            raise ConfigError(f"{where}: unknown section [{section}]")
        for key, raw in parser.items(section):
            where = f"{origin}:{lines.get((section, key), '?')}"
            try:
                name, kind, scale = _split_key(key, section)
                value = _convert(raw, kind, scale)
            except ConfigError as exc:
                raise ConfigError(f"{where}: {exc}") from None
            except ValueError as exc:
                raise ConfigError(f"{where}: [{section}] {key}: {exc}") from None
            cfg.section(section)[name] = value
            cfg.sources[(section, name)] = where
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def _system_dict(p: SystemParams) -> dict:
    return {"rabi": p.omega_rabi, "trap": p.omega_trap, "eta": p.eta, "p0": p.p0,
            "probe_shift_coeff": p.probe_shift_coeff}


def preset(name: str) -> RunConfig:
    """Built-in configurations: ``sr88``, ``sr88-mikado`` and ``sr88-rx90``."""
    base = sr88_params(0.95)
    if name == "sr88":
        return RunConfig(system=_system_dict(base))
    if name == "sr88-mikado":
        return RunConfig(system=_system_dict(base),
                         pulse={"duration": sr88_mikado_duration(base), "mikado": True},
                         optimize={"intensity_half_width": 0.025, "intensity_points": 11})
    if name == "sr88-rx90":
        return RunConfig(system=_system_dict(base), pulse={"duration": 15e-6, "target": "rx90"})
    raise ConfigError(f"unknown preset {name!r}; choose from sr88, sr88-mikado, sr88-rx90")


PRESETS = ("sr88", "sr88-mikado", "sr88-rx90")
