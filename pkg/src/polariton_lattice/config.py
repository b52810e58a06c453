"""Physical parameters, unit conversion and INI config loading.

Internal units: hbar = 1, energies and rates in rad/us, lengths in um,
densities in um^-3.  Config files give frequencies as nu in MHz (converted
with omega = 2 pi nu), lengths in um, times in us, the atomic density in
cm^-3 and C6 in MHz um^6.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

TWO_PI = 2.0 * math.pi
SPEED_OF_LIGHT = 2.99792458e8  # um/us
CM3_TO_UM3 = 1e-12  # n[um^-3] = n[cm^-3] * 1e-12
RB87_D2_MHZ = 384.23e6
EQUAL_J1 = "equal_J1"

# fields stored as angular frequencies (given in MHz in files and from_mhz)
FREQUENCY_FIELDS = (
    "omega_ctrl", "delta_e", "gamma_e", "gamma_r", "delta2",
    "pump", "beta", "gamma_out", "omega_ge", "c6",
)
SIGNED_FIELDS = ("delta_e", "delta2", "beta")
REQUIRED_KEYS = ("c6", "omega_ctrl", "a", "n_sites")


@dataclass(frozen=True)
class PhysicalConfig:
    """All experimental parameters plus numerical cutoffs (internal units)."""

    omega_ctrl: float
    a: float
    n_sites: int
    c6: float
    delta_e: float = TWO_PI * 20.0
    gamma_e: float = TWO_PI * 6.0
    gamma_r: float = TWO_PI * 0.025
    delta2: float = 0.0
    n0: float = 1e13 * CM3_TO_UM3
    sigma_density: float = 0.025
    pump: float = TWO_PI * 0.125
    beta: float = 0.0
    gamma_out: float | str = EQUAL_J1
    pw_cutoff: int = 15
    k_points: int | None = None
    quad_order: int = 32
    seed: int = 0
    omega_ge: float = TWO_PI * RB87_D2_MHZ
    dark_weight_tol: float = 0.05
    tail_cells: int = 5

    def __post_init__(self):
        if self.k_points is None:
            object.__setattr__(self, "k_points", self.n_sites)
        self.validate()

    def validate(self):
        bad = []
        for name in FREQUENCY_FIELDS:
            value = getattr(self, name)
            if name == "gamma_out" and value == EQUAL_J1:
                continue
            if isinstance(value, str) or not math.isfinite(value):
                bad.append(f"{name} must be a finite number")
            elif name not in SIGNED_FIELDS and value < 0:
                bad.append(f"{name} must be >= 0 (got {value})")
        if isinstance(self.gamma_out, str) and self.gamma_out != EQUAL_J1:
            bad.append(f"gamma_out must be a rate or {EQUAL_J1!r}")
        if not self.a > 0:
            bad.append("a must be > 0")
        if not self.sigma_density > 0:
            bad.append("sigma_density must be > 0")
        if not self.n0 >= 0:
            bad.append("n0 must be >= 0")
        if not self.omega_ge > 0:
            bad.append("omega_ge must be > 0")
        for name, low in (("n_sites", 1), ("pw_cutoff", 1), ("quad_order", 2), ("tail_cells", 1)):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < low:
                bad.append(f"{name} must be an integer >= {low}")
        if self.k_points < self.n_sites:
            bad.append("k_points must be >= n_sites")
        if not 0 < self.dark_weight_tol < 1:
            bad.append("dark_weight_tol must lie in (0, 1)")
        if bad:
            raise ConfigError("invalid config: " + "; ".join(bad), keys=[b.split()[0] for b in bad])

    @property
    def detuning(self) -> complex:
        """Complex intermediate-state detuning delta_e - i gamma_e."""
        return complex(self.delta_e, -self.gamma_e)

    @classmethod
    def from_mhz(cls, **kwargs):
        """Build from lab units: frequencies in MHz (nu), n0 in cm^-3, C6 in MHz um^6."""
        for name in FREQUENCY_FIELDS:
            if name in kwargs and not isinstance(kwargs[name], str):
                kwargs[name] = TWO_PI * float(kwargs[name])
        if "n0" in kwargs:
            kwargs["n0"] = float(kwargs["n0"]) * CM3_TO_UM3
        return cls(**kwargs)

    def replace(self, **changes) -> PhysicalConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class RunPlan:
    """Engine settings resolved from the ``[dynamics]`` and ``[run]`` sections."""

    t_final: float = 40.0
    n_samples: int = 201
    dt: float | None = None
    n_traj: int = 500
    tau: float | None = None
    n_sweeps: int = 1
    tau_final: float = 40.0
    steady_t_max: float = 400.0
    seed: int = 0
    deferred: tuple = field(default_factory=tuple)


# key -> (section, kind); kind drives parsing and unit conversion
SCHEMA = {
    "omega_ctrl": ("band", "freq"),
    "delta_e": ("band", "freq"),
    "gamma_e": ("band", "freq"),
    "delta2": ("band", "freq"),
    "a": ("band", "float"),
    "n0": ("band", "density"),
    "sigma_density": ("band", "float"),
    "omega_ge": ("band", "freq"),
    "pw_cutoff": ("band", "int"),
    "k_points": ("band", "int"),
    "dark_weight_tol": ("band", "float"),
    "n_sites": ("lattice", "int"),
    "c6": ("lattice", "freq"),
    "gamma_r": ("lattice", "freq"),
    "pump": ("lattice", "freq"),
    "beta": ("lattice", "freq"),
    "gamma_out": ("lattice", "freq_or_sentinel"),
    "quad_order": ("lattice", "int"),
    "tail_cells": ("lattice", "int"),
    "t_final": ("dynamics", "float"),
    "n_samples": ("dynamics", "int"),
    "dt": ("dynamics", "float"),
    "n_traj": ("dynamics", "int"),
    "tau": ("dynamics", "float"),
    "n_sweeps": ("dynamics", "int"),
    "tau_final": ("dynamics", "float"),
    "steady_t_max": ("dynamics", "float"),
    "seed": ("run", "int"),
}
SECTIONS = ("band", "lattice", "dynamics", "run")
PLAN_KEYS = tuple(f.name for f in dataclasses.fields(RunPlan) if f.name != "deferred")


def _parse_value(key, kind, raw):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "freq":
            return TWO_PI * float(raw)
        if kind == "density":
            return float(raw) * CM3_TO_UM3
        if kind == "freq_or_sentinel":
            return EQUAL_J1 if raw == EQUAL_J1 else TWO_PI * float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {kind}", keys=[key]) from None
    raise AssertionError(kind)


def parse_config_text(text: str):
    """Parse INI text into ``(PhysicalConfig, RunPlan)``; raises :class:`ConfigError`."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", keys=[section])
        for key, raw in parser.items(section):
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r} in section [{section}]", keys=[key])
            want, kind = SCHEMA[key]
            if want != section:
                raise ConfigError(f"key {key!r} belongs in section [{want}], found in [{section}]", keys=[key])
            values[key] = _parse_value(key, kind, raw)

    missing = [k for k in REQUIRED_KEYS if k not in values]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing), keys=missing)

    plan_kwargs = {k: values.pop(k) for k in list(values) if k in PLAN_KEYS}
    if "seed" in plan_kwargs:
        values["seed"] = plan_kwargs["seed"]
    cfg = PhysicalConfig(**values)
    deferred = ("gamma_out=equal_J1 resolved after the band stage",) if cfg.gamma_out == EQUAL_J1 else ()
    plan = RunPlan(**plan_kwargs, deferred=deferred)
    _check_plan(plan)
    return cfg, plan


def _check_plan(plan: RunPlan):
    bad = []
    for name in ("t_final", "tau_final", "steady_t_max"):
        if not getattr(plan, name) > 0:
            bad.append(name)
    for name in ("dt", "tau"):
        value = getattr(plan, name)
        if value is not None and not value > 0:
            bad.append(name)
    for name in ("n_samples", "n_traj", "n_sweeps"):
        if getattr(plan, name) < (2 if name == "n_samples" else 1):
            bad.append(name)
    if bad:
        raise ConfigError("invalid dynamics settings: " + ", ".join(bad), keys=bad)


def validate_config(path):
    """Load and validate a config file; returns ``(PhysicalConfig, RunPlan)``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text)


def _to_file_units(key, value):
    kind = SCHEMA[key][1]
    if value is None or value == EQUAL_J1:
        return value
    if kind in ("freq", "freq_or_sentinel"):
        return value / TWO_PI
    if kind == "density":
        return value / CM3_TO_UM3
    return value


def resolved_config_text(cfg: PhysicalConfig, plan: RunPlan) -> str:
    """Echo the fully resolved config in file units (``%.17g``)."""
    merged = {**cfg.to_dict(), **{k: getattr(plan, k) for k in PLAN_KEYS}}
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        for key, (sec, _kind) in SCHEMA.items():
            if sec != section:
                continue
            value = _to_file_units(key, merged[key])
            if value is None:
                lines.append(f"# {key} = (default)")
            elif isinstance(value, str):
                lines.append(f"{key} = {value}")
            elif isinstance(value, int):
                lines.append(f"{key} = {value}")
            else:
                lines.append(f"{key} = {value:.17g}")
        lines.append("")
    for note in plan.deferred:
        lines.append(f"# deferred: {note}")
    return "\n".join(lines) + "\n"
