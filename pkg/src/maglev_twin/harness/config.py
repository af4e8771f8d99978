"""Configuration loading and model assembly for the simulation harness.

Configuration files are JSON.  Every key is optional; omitted keys fall
back to the calibrated defaults of the physical rig (coil geometry,
handle magnets, sensing noise, controller gains, loop rate).  Unknown
keys anywhere in the document are rejected by name, and invalid values
raise errors naming the offending field.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from ..control import (ControlContext, ControllerGains, DEFAULT_KD,
                       DEFAULT_KP, DEFAULT_RATE_HZ, LoopTiming, hold_setpoint)
from ..fieldgrid import load_or_build_grid
from ..magnetics import (COIL_PITCH, CoilArrayModel, CoreModel,
                         CylindricalCoil, PermanentMagnet)
from ..plant import (BODY_MASS, MAGNET_DENSITY, CylinderComponent,
                     HandleProperties, PointMassComponent, RigidBodyState,
                     handle_inertia)
from ..sensing import DEFAULT_NOISE_STD, default_rig
from ..geometry import Pose

DEFAULT_HOVER = np.array([0.0, 0.0, 0.025])
DEFAULT_GRID_RESOLUTION = 5.0e-4


class ConfigError(ValueError):
    """Raised for unparseable or invalid configuration documents."""


@dataclass(frozen=True)
class CoilConfig:
    height: float = 0.027
    outer_diameter: float = 0.025
    inner_diameter: float = 0.0125
    turns: int = 1000
    max_current: float = 4.0
    pitch: float = COIL_PITCH
    rows: int = 3
    columns: int = 4


@dataclass(frozen=True)
class CoreConfig:
    height: float = 0.037
    diameter: float = 0.008
    m_sat: float = 1.6e6
    chi_a: float = 25.0
    enabled: bool = True


@dataclass(frozen=True)
class MagnetConfig:
    thickness: float = 0.00902
    diameter: float = 0.01905
    remanence: float = 1.45
    spacing: float = 0.06


@dataclass(frozen=True)
class SensingConfig:
    noise_std: float = DEFAULT_NOISE_STD


@dataclass(frozen=True)
class GainsConfig:
    kp: tuple = tuple(DEFAULT_KP)
    kd: tuple = tuple(DEFAULT_KD)


@dataclass(frozen=True)
class LoopConfig:
    rate_hz: float = DEFAULT_RATE_HZ


@dataclass(frozen=True)
class GridConfig:
    resolution: float = DEFAULT_GRID_RESOLUTION
    cache_path: str | None = None


@dataclass(frozen=True)
class Config:
    coil: CoilConfig = field(default_factory=CoilConfig)
    core: CoreConfig = field(default_factory=CoreConfig)
    magnet: MagnetConfig = field(default_factory=MagnetConfig)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    gains: GainsConfig = field(default_factory=GainsConfig)
    loop: LoopConfig = field(default_factory=LoopConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    seed: int = 0
    scene_path: str | None = None


_SECTIONS = {
    "coil": CoilConfig,
    "core": CoreConfig,
    "magnet": MagnetConfig,
    "sensing": SensingConfig,
    "gains": GainsConfig,
    "loop": LoopConfig,
    "grid": GridConfig,
}

# field path -> predicate, error description
_POSITIVE = ("must be positive", lambda v: v > 0)
_NON_NEGATIVE = ("must be non-negative", lambda v: v >= 0)
_RULES = {
    "coil.height": _POSITIVE,
    "coil.outer_diameter": _POSITIVE,
    "coil.inner_diameter": _POSITIVE,
    "coil.turns": ("must be >= 1", lambda v: v >= 1),
    "coil.max_current": _POSITIVE,
    "coil.pitch": _POSITIVE,
    "coil.rows": ("must be >= 1", lambda v: v >= 1),
    "coil.columns": ("must be >= 1", lambda v: v >= 1),
    "core.height": _POSITIVE,
    "core.diameter": _POSITIVE,
    "core.m_sat": _POSITIVE,
    "core.chi_a": _POSITIVE,
    "magnet.thickness": _POSITIVE,
    "magnet.diameter": _POSITIVE,
    "magnet.remanence": _POSITIVE,
    "magnet.spacing": _POSITIVE,
    "sensing.noise_std": _NON_NEGATIVE,
    "loop.rate_hz": ("must lie in [500, 2000]", lambda v: 500 <= v <= 2000),
    "grid.resolution": _POSITIVE,
}


def _coerce(path: str, value, target_type):
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"field '{path}' must be a number")
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"field '{path}' must be an integer")
        return value
    if target_type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"field '{path}' must be a boolean")
        return value
    return value


def _build_section(name: str, cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{name}' must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown key '{name}.{key}'")
        path = f"{name}.{key}"
        if key in ("kp", "kd"):
            if (not isinstance(value, list) or len(value) != 6
                    or not all(isinstance(v, (int, float))
                               and not isinstance(v, bool) for v in value)):
                raise ConfigError(f"field '{path}' must be a list of 6 numbers")
            if any(v < 0 for v in value):
                raise ConfigError(f"field '{path}' must be non-negative")
            kwargs[key] = tuple(float(v) for v in value)
            continue
        if path == "grid.cache_path":
            if value is not None and not isinstance(value, str):
                raise ConfigError(f"field '{path}' must be a string or null")
            kwargs[key] = value
            continue
        ftype = {"turns": int, "rows": int, "columns": int}.get(
            key, bool if key == "enabled" else float)
        value = _coerce(path, value, ftype)
        rule = _RULES.get(path)
        if rule is not None and not rule[1](value):
            raise ConfigError(f"field '{path}' {rule[0]}")
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> Config:
    """Validate a parsed JSON document and fill defaults."""
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be an object")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _build_section(key, _SECTIONS[key], value)
        elif key == "seed":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError("field 'seed' must be an integer")
            if value < 0:
                raise ConfigError("field 'seed' must be non-negative")
            kwargs[key] = value
        elif key == "scene_path":
            if value is not None and not isinstance(value, str):
                raise ConfigError("field 'scene_path' must be a string or null")
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown key '{key}'")
    cfg = Config(**kwargs)
    if not cfg.coil.inner_diameter < cfg.coil.outer_diameter:
        raise ConfigError("field 'coil.inner_diameter' must be smaller than"
                          " 'coil.outer_diameter'")
    return cfg


def load_config(path) -> Config:
    """Load and validate a JSON configuration file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error in {path} at line {exc.lineno},"
                          f" column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# assembly: Config -> simulation objects
# ---------------------------------------------------------------------------

def build_coils(cfg: Config) -> list:
    core = CoreModel(cfg.core.height, cfg.core.diameter, cfg.core.m_sat,
                     cfg.core.chi_a, cfg.core.enabled)
    coils = []
    xs = (np.arange(cfg.coil.columns) - (cfg.coil.columns - 1) / 2.0)
    ys = (np.arange(cfg.coil.rows) - (cfg.coil.rows - 1) / 2.0)
    for y in ys * cfg.coil.pitch:
        for x in xs * cfg.coil.pitch:
            coils.append(CylindricalCoil(
                base_position=(float(x), float(y), 0.0),
                height=cfg.coil.height,
                outer_diameter=cfg.coil.outer_diameter,
                inner_diameter=cfg.coil.inner_diameter,
                turns=cfg.coil.turns,
                max_current=cfg.coil.max_current,
                core=core))
    return coils


def build_magnets(cfg: Config) -> list:
    half = cfg.magnet.spacing / 2.0
    return [PermanentMagnet(cfg.magnet.thickness, cfg.magnet.diameter,
                            cfg.magnet.remanence,
                            attach_point=(sign * half, 0.0, 0.0))
            for sign in (-1.0, 1.0)]


def build_model(cfg: Config, grid=None) -> CoilArrayModel:
    coils = build_coils(cfg)
    if grid is None:
        grid = load_or_build_grid(coils[0], cfg.grid.resolution,
                                  cfg.grid.cache_path)
    return CoilArrayModel(coils, build_magnets(cfg), grid=grid)


def build_props(cfg: Config) -> HandleProperties:
    radius = cfg.magnet.diameter / 2.0
    volume = np.pi * radius ** 2 * cfg.magnet.thickness
    m = MAGNET_DENSITY * volume
    half = cfg.magnet.spacing / 2.0
    components = [
        CylinderComponent(m, radius, cfg.magnet.thickness,
                          np.array([-half, 0.0, 0.0])),
        CylinderComponent(m, radius, cfg.magnet.thickness,
                          np.array([half, 0.0, 0.0])),
        PointMassComponent(BODY_MASS, np.zeros(3)),
    ]
    mass, com, inertia = handle_inertia(components)
    return HandleProperties(mass, inertia, com)


def build_context(cfg: Config, grid=None, start_position=None,
                  seed: int | None = None) -> ControlContext:
    """Assemble a ready-to-run control context hovering at the start pose."""
    start = DEFAULT_HOVER if start_position is None else \
        np.asarray(start_position, dtype=float)
    pose = Pose(start.copy())
    return ControlContext(
        model=build_model(cfg, grid=grid),
        props=build_props(cfg),
        rig=default_rig(cfg.sensing.noise_std),
        gains=ControllerGains(np.array(cfg.gains.kp), np.array(cfg.gains.kd)),
        state=RigidBodyState(pose),
        trajectory=hold_setpoint(pose.copy()),
        timing=LoopTiming(rate_hz=cfg.loop.rate_hz),
        rng=np.random.default_rng(cfg.seed if seed is None else seed))
