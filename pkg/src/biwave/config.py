"""Run configuration: a TOML file with five tables and strict keys.

    [grid]      dim, points, period
    [target]    kind ("sphere" | "flat"), ambient_dim, radius
    [initial]   kind ("great_circle" | "random_bump" | "from_file") and its keys
    [evolver]   eps, dt, scheme, dealias, renormalize, k, cutoff
    [run]       T, record_stride, output_dir, seed, checkpoint_every, workers

``--override section.key=value`` flags are parsed as TOML values (falling
back to a bare string), applied before validation.
"""

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .evolver import RENORMALIZE, SCHEMES, EvolverConfig
from .geometry import TargetManifold
from .grid import PeriodicGrid

INITIAL_KINDS = ("great_circle", "random_bump", "from_file")


@dataclass(frozen=True)
class GridSpec:
    dim: int = 1
    points: int = 128
    period: float = 2 * math.pi

    def build(self):
        return PeriodicGrid(self.dim, self.points, self.period)


@dataclass(frozen=True)
class TargetSpec:
    kind: str = "sphere"
    ambient_dim: int = 3
    radius: float = 1.0

    def build(self):
        if self.kind == "flat":
            return TargetManifold.flat(self.ambient_dim)
        return TargetManifold(self.kind, self.ambient_dim, self.radius)


@dataclass(frozen=True)
class InitialDataSpec:
    kind: str = "great_circle"
    # great_circle
    wave_vector: tuple = (1,)
    omega: float = 2.0
    phase: float = 0.0
    bump_amplitude: float = 0.0
    # random_bump (also the bump added to a great circle)
    amplitude: float = 0.2
    band_limit: int = 4
    seed: int = 0
    decay: float = 0.0
    velocity_amplitude: float = 0.0
    # from_file
    path: str = ""


@dataclass(frozen=True)
class RunSpec:
    T: float = 1.0
    record_stride: int = 10
    output_dir: str = "runs/out"
    seed: int = 0
    checkpoint_every: int = 0
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    target: TargetSpec = field(default_factory=TargetSpec)
    initial: InitialDataSpec = field(default_factory=InitialDataSpec)
    evolver: EvolverConfig = field(default_factory=EvolverConfig)
    run: RunSpec = field(default_factory=RunSpec)

    def to_dict(self):
        return {
            "grid": asdict(self.grid),
            "target": asdict(self.target),
            "initial": {**asdict(self.initial), "wave_vector": list(self.initial.wave_vector)},
            "evolver": asdict(self.evolver),
            "run": asdict(self.run),
        }

    def content_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, overrides):
        return from_dict(apply_overrides(self.to_dict(), overrides))


SECTIONS = {
    "grid": GridSpec,
    "target": TargetSpec,
    "initial": InitialDataSpec,
    "evolver": EvolverConfig,
    "run": RunSpec,
}


def _coerce(cls, section, raw):
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    out = {}
    for name, value in raw.items():
        default = known[name].default
        if name == "wave_vector":
            if isinstance(value, (int, float)):
                value = [value]
            if not isinstance(value, (list, tuple)) or not all(isinstance(v, int) for v in value):
                raise ConfigError("[initial] wave_vector must be a list of integers")
            value = tuple(value)
        elif value is None or default is None:
            pass
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"[{section}] {name} must be a boolean")
        elif isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"[{section}] {name} must be an integer, got {value!r}")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"[{section}] {name} must be a number, got {value!r}")
            value = float(value)
        elif isinstance(default, str) and not isinstance(value, str):
            raise ConfigError(f"[{section}] {name} must be a string, got {value!r}")
        out[name] = value
    # fields whose default is None (dt, k) still need a type check
    for name in ("dt",):
        if name in out and out[name] is not None and not isinstance(out[name], (int, float)):
            raise ConfigError(f"[{section}] {name} must be a number")
    for name in ("k",):
        if name in out and out[name] is not None and not isinstance(out[name], int):
            raise ConfigError(f"[{section}] {name} must be an integer")
    return out


def from_dict(data):
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    parts = {}
    for section, cls in SECTIONS.items():
        raw = data.get(section, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"[{section}] must be a table")
        try:
            parts[section] = cls(**_coerce(cls, section, raw))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}") from exc
    cfg = RunConfig(**parts)
    validate(cfg)
    return cfg


def validate(cfg):
    g, tg, init, ev, run = cfg.grid, cfg.target, cfg.initial, cfg.evolver, cfg.run
    try:
        g.build()
        tg.build()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if init.kind not in INITIAL_KINDS:
        raise ConfigError(f"[initial] kind must be one of {INITIAL_KINDS}")
    if init.kind == "great_circle":
        if len(init.wave_vector) != g.dim:
            raise ConfigError(f"[initial] wave_vector needs {g.dim} entries")
        if tg.ambient_dim < 2:
            raise ConfigError("great_circle data needs ambient_dim >= 2")
    if init.kind == "from_file" and not init.path:
        raise ConfigError("[initial] from_file needs a path")
    if init.amplitude < 0 or init.bump_amplitude < 0 or init.band_limit < 1:
        raise ConfigError("[initial] amplitudes must be >= 0 and band_limit >= 1")
    if ev.scheme not in SCHEMES or ev.renormalize not in RENORMALIZE:
        raise ConfigError("[evolver] bad scheme or renormalize value")
    try:
        ev.regularity(g.dim)
    except ValueError as exc:
        raise ConfigError(f"[evolver] {exc}") from exc
    if ev.k is not None and ev.k > 8:
        raise ConfigError("[evolver] k exceeds the derivative budget (8)")
    if not run.T >= 0:
        raise ConfigError("[run] T must be >= 0")
    if run.record_stride < 1 or run.checkpoint_every < 0 or run.workers < 1:
        raise ConfigError("[run] record_stride and workers must be >= 1, checkpoint_every >= 0")


def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(data, overrides):
    data = json.loads(json.dumps(data))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) != 2 or parts[0] not in SECTIONS:
            raise ConfigError(f"override key {key!r} must be section.key")
        data.setdefault(parts[0], {})[parts[1]] = _parse_value(text.strip())
    return data


def load_config(path=None, overrides=()):
    data = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc
    return from_dict(apply_overrides(data, overrides))


def dump_toml(cfg):
    """Minimal TOML writer for the config echo (values are scalars or int lists)."""
    lines = []
    for section, values in cfg.to_dict().items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            if value is None:
                continue
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    return str(v)


def replace_section(cfg, section, **changes):
    return replace(cfg, **{section: replace(getattr(cfg, section), **changes)})
