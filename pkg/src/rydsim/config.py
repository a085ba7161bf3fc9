"""YAML experiment configuration with strict key checking.

Frequencies and rates are given in Hz and converted to rad/s here; nothing
downstream sees Hz. Unknown keys are errors, reported with their line number.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from rydsim.physics import NoiseSpec

TWO_PI = 2 * math.pi

EXPERIMENTS = ("raman_rabi", "rydberg_single", "rydberg_pair", "entangle_parity", "calibrate")


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a sign or dot, e.g. ``7e6``."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


class ConfigError(ValueError):
    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field


@dataclass(frozen=True)
class PhysicsConfig:
    raman_rabi_hz: float = 250e3
    raman_detuning_hz: float = 0.0
    rydberg_rabi_hz: float = 7e6
    map_rabi_hz: float = 7e6
    rydberg_detuning_hz: float = 0.0
    blockade_shift_hz: float = 50e6
    bell_phase_rad: float = 0.0
    dt_s: float | None = None


@dataclass(frozen=True)
class NoiseConfig:
    scatter_rate_hz: float = 0.0
    scatter_branching: tuple = (1.0, 0.0, 0.0)
    ryd_dephasing_hz: float = 0.0
    intensity_sigma: float = 0.0
    detuning_sigma_hz: float = 0.0
    map_phase_sigma_rad: float = 0.0
    extra_loss_prob: float = 0.0
    ryd_decay_hz: float = 0.0

    def to_spec(self) -> NoiseSpec:
        return NoiseSpec(
            scatter_rate_rad_per_s=TWO_PI * self.scatter_rate_hz,
            scatter_branching=tuple(self.scatter_branching),
            ryd_dephasing_rad_per_s=TWO_PI * self.ryd_dephasing_hz,
            intensity_sigma=self.intensity_sigma,
            detuning_sigma_rad_per_s=TWO_PI * self.detuning_sigma_hz,
            map_phase_sigma_rad=self.map_phase_sigma_rad,
            extra_loss_prob=self.extra_loss_prob,
            ryd_decay_rad_per_s=TWO_PI * self.ryd_decay_hz,
        )


@dataclass(frozen=True)
class ScanConfig:
    start: float = 0.0
    stop: float = 8e-6
    points: int = 60


@dataclass(frozen=True)
class AnalysisConfig:
    pair_survival: float | None = None


CALIBRATION_PARAMETERS = (
    "extra_loss_prob",
    "scatter_rate_hz",
    "scatter_dark_fraction",
    "scatter_down_fraction",
    "ryd_dephasing_hz",
    "intensity_sigma",
    "detuning_sigma_hz",
    "ryd_decay_hz",
)


@dataclass(frozen=True)
class CalibrateConfig:
    target: dict = field(default_factory=lambda: {"p11": 0.06, "p10": 0.31, "p01": 0.34, "p00": 0.29})
    grid: dict = field(default_factory=dict)
    shots: int = 16
    sweeps: int = 4
    verify_shots: int = 20000


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "raman_rabi"
    seed: int = 0
    shots: int = 1
    sample_counts: bool = False
    repetitions: int = 100
    output: str | None = None
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    calibrate: CalibrateConfig = field(default_factory=CalibrateConfig)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}", field="experiment")
        if self.shots < 1:
            raise ConfigError("shots must be >= 1", field="shots")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1", field="repetitions")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", field="seed")
        if self.experiment != "calibrate" and self.scan.points < 2:
            raise ConfigError("scan needs at least 2 points", field="scan.points")
        for name in ("physics", "noise", "scan"):
            section = getattr(self, name)
            for f in fields(section):
                value = getattr(section, f.name)
                if isinstance(value, float) and not math.isfinite(value):
                    raise ConfigError("value must be finite", field=f"{name}.{f.name}")

    def with_overrides(self, seed=None, shots=None, output=None) -> "ExperimentConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if shots is not None:
            changes["shots"] = shots
        if output is not None:
            changes["output"] = output
        return replace(self, **changes) if changes else self

    def noise_spec(self) -> NoiseSpec:
        return self.noise.to_spec()


_SECTIONS = {
    "physics": PhysicsConfig,
    "noise": NoiseConfig,
    "scan": ScanConfig,
    "analysis": AnalysisConfig,
    "calibrate": CalibrateConfig,
}


def _key_lines(node) -> dict:
    """Map dotted key paths to source lines of a composed YAML mapping."""
    lines = {}
    if not isinstance(node, yaml.MappingNode):
        return lines
    for key_node, value_node in node.value:
        key = key_node.value
        lines[key] = key_node.start_mark.line + 1
        for sub, line in _key_lines(value_node).items():
            lines[f"{key}.{sub}"] = line
    return lines


def _coerce(value, default, name, line):
    """Check ``value`` against the type of the dataclass default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", line, name)
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", line, name)
        return value
    if isinstance(default, float) or (default is None and name.endswith(("_s", "survival"))):
        if value is None and default is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", line, name)
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
            raise ConfigError(f"expected a list of numbers, got {value!r}", line, name)
        return tuple(float(v) for v in value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"expected a mapping, got {value!r}", line, name)
        return value
    if value is not None and not isinstance(value, str):
        raise ConfigError(f"expected a string, got {value!r}", line, name)
    return value


def _build_section(cls, data, lines, prefix):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", lines.get(prefix), prefix)
    defaults = cls()
    known = {f.name for f in fields(cls)}
    values = {}
    for key, value in data.items():
        path = f"{prefix}.{key}"
        if key not in known:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(known))})", lines.get(path), path)
        values[key] = _coerce(value, getattr(defaults, key), path, lines.get(path))
    return cls(**values)


def _check_calibrate(cal: CalibrateConfig, lines):
    expected = {"p11", "p10", "p01", "p00"}
    if set(cal.target) != expected:
        raise ConfigError(f"target needs exactly the keys {sorted(expected)}", lines.get("calibrate.target"), "calibrate.target")
    for name, values in cal.grid.items():
        path = f"calibrate.grid.{name}"
        if name not in CALIBRATION_PARAMETERS:
            raise ConfigError(f"unknown calibration parameter (allowed: {', '.join(CALIBRATION_PARAMETERS)})", lines.get(path), path)
        if not isinstance(values, list) or not values or not all(isinstance(v, (int, float)) for v in values):
            raise ConfigError("expected a nonempty list of numbers", lines.get(path), path)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        root = yaml.compose(text, Loader=_Loader)
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"{source}: malformed YAML ({getattr(exc, 'problem', exc)})", mark.line + 1 if mark else None) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping", 1)
    lines = _key_lines(root)
    defaults = ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(known))})", lines.get(key), key)
        if key in _SECTIONS:
            values[key] = _build_section(_SECTIONS[key], value, lines, key)
        else:
            values[key] = _coerce(value, getattr(defaults, key), key, lines.get(key))
    try:
        config = ExperimentConfig(**values)
        config.noise_spec()
    except ConfigError as exc:
        if exc.line is None and exc.field is not None:
            raise ConfigError(str(exc).split(": ", 1)[-1], lines.get(exc.field), exc.field) from None
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid noise parameters: {exc}", lines.get("noise"), "noise") from exc
    _check_calibrate(config.calibrate, lines)
    return config


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, str(path))


def config_to_dict(config: ExperimentConfig) -> dict:
    """Plain-data form of a config, suitable for ``yaml.safe_dump``."""
    out = {}
    for f in fields(config):
        value = getattr(config, f.name)
        if f.name in _SECTIONS:
            section = {}
            for sf in fields(value):
                v = getattr(value, sf.name)
                section[sf.name] = list(v) if isinstance(v, tuple) else v
            out[f.name] = section
        else:
            out[f.name] = value
    return out
