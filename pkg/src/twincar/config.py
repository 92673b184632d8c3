"""Stack configuration: one YAML file describes a whole composition.

The file is the compose-file analog — which composition kind to build,
transport endpoint, vehicle geometry, simulation parameters, register map,
clamp angle, polling period. Calibration writes the fitted velocity factor
back into the same file, so a config round-trips through load/save.
"""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .drivers import DEFAULT_CLAMP_DEG, RegisterMap
from .errors import ConfigError, DriverError, SimulationError
from .simulator import SimConfig, VehicleGeometry

KNOWN_KINDS = (
    "physical-twin-sim",
    "digital-model",
    "digital-shadow",
    "digital-twin",
    "digital-twin-prototype",
)

KNOWN_TRANSPORTS = ("loopback", "tcp")


@dataclass(frozen=True)
class StackConfig:
    kind: str = "digital-twin"
    transport: str = "loopback"
    host: str = "127.0.0.1"
    port: int = 0  # 0 = pick a free port when listening
    clamp_deg: float = DEFAULT_CLAMP_DEG
    poll_period_s: float = 0.010  # emulator + relay polling cadence
    trace_hal: bool = True
    geometry: VehicleGeometry = field(default_factory=VehicleGeometry)
    sim: SimConfig = field(default_factory=SimConfig)
    register_map: RegisterMap = field(default_factory=RegisterMap)

    def __post_init__(self) -> None:
        if self.kind not in KNOWN_KINDS:
            raise ConfigError(f"unknown composition kind {self.kind!r}; expected one of {KNOWN_KINDS}")
        if self.transport not in KNOWN_TRANSPORTS:
            raise ConfigError(f"unknown transport {self.transport!r}; expected one of {KNOWN_TRANSPORTS}")
        if not 0 <= self.port <= 65535:
            raise ConfigError(f"port {self.port} out of range")
        if self.poll_period_s <= 0:
            raise ConfigError("poll period must be positive")
        if not 0 <= self.clamp_deg <= 40:
            raise ConfigError("clamp angle must lie in [0, 40] degrees")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "transport": self.transport,
            "host": self.host,
            "port": self.port,
            "clamp_deg": self.clamp_deg,
            "poll_period_s": self.poll_period_s,
            "trace_hal": self.trace_hal,
            "geometry": dataclasses.asdict(self.geometry),
            "sim": dataclasses.asdict(self.sim),
            "register_map": dataclasses.asdict(self.register_map),
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "StackConfig":
        if not isinstance(raw, dict):
            raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
        data = dict(raw)
        kwargs: dict[str, Any] = {}
        try:
            if "geometry" in data:
                kwargs["geometry"] = VehicleGeometry(**_section(data.pop("geometry"), "geometry"))
            if "sim" in data:
                kwargs["sim"] = SimConfig(**_section(data.pop("sim"), "sim"))
            if "register_map" in data:
                kwargs["register_map"] = RegisterMap(**_section(data.pop("register_map"), "register_map"))
            scalar_fields = {
                f.name for f in dataclasses.fields(cls) if f.name not in ("geometry", "sim", "register_map")
            }
            unknown = set(data) - scalar_fields
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
            kwargs.update(data)
            return cls(**kwargs)
        except (TypeError, SimulationError, DriverError) as exc:
            raise ConfigError(str(exc)) from exc


def _section(value: Any, name: str) -> dict[str, Any]:
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return value


def default_config(**overrides: Any) -> StackConfig:
    return dataclasses.replace(StackConfig(), **overrides) if overrides else StackConfig()


def load_config(path: str | Path) -> StackConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file is not valid YAML: {exc}") from exc
    return StackConfig.from_dict(raw)


def save_config(config: StackConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))


def set_velocity_factor(path: str | Path, velocity_factor: float) -> StackConfig:
    """Persist a calibrated velocity factor into an existing config file."""
    config = load_config(path)
    updated = dataclasses.replace(
        config, sim=dataclasses.replace(config.sim, velocity_factor=velocity_factor)
    )
    save_config(updated, path)
    return updated
