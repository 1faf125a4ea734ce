"""Run configuration: defaults from the evaluation parameter table, file loading, overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .oneshot import Scheme
from .phy import PhyConfig
from .scenario import ScenarioConfig
from .sps import SpsConfig


@dataclass(frozen=True)
class SimConfig:
    scheme: Scheme = Scheme.PROPOSED
    seed: int = 1
    duration_s: float = 60.0
    warmup_s: float = 5.0
    slot_ms: float = 1.0
    p_keep: float = 0.8
    congestion_enabled: bool = True
    rssi_detection: bool = True
    moving: bool = True
    eval_radius_m: float = 500.0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    phy: PhyConfig = field(default_factory=PhyConfig)
    sps: SpsConfig = field(default_factory=SpsConfig)

    @property
    def n_slots(self) -> int:
        return int(round(self.duration_s * 1000.0 / self.slot_ms))

    @property
    def warmup_slot(self) -> int:
        return int(round(self.warmup_s * 1000.0 / self.slot_ms))

    def validate(self) -> None:
        if not isinstance(self.scheme, Scheme):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not self.duration_s > self.warmup_s >= 0:
            raise ConfigError("need duration_s > warmup_s >= 0")
        if self.slot_ms != 1.0:
            raise ConfigError("only 1-ms slots are supported")
        if not 0.0 <= self.p_keep <= 0.8:
            raise ConfigError(f"p_keep={self.p_keep} outside [0, 0.8]")
        if self.eval_radius_m <= 0:
            raise ConfigError("eval_radius_m must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        self.scenario.validate()
        self.phy.validate()
        self.sps.validate()

    def with_overrides(self, overrides: dict[str, Any]) -> "SimConfig":
        return from_dict(overrides, base=self)


_NESTED = {"scenario": ScenarioConfig, "phy": PhyConfig, "sps": SpsConfig}


def _coerce(path: str, value: Any, default: Any) -> Any:
    if isinstance(default, Scheme):
        try:
            return Scheme(value)
        except ValueError:
            raise ConfigError(f"{path}: unknown scheme {value!r}") from None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected bool, got {type(value).__name__}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected int, got {type(value).__name__}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected number, got {type(value).__name__}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected string, got {type(value).__name__}")
        return value
    raise ConfigError(f"{path}: unsupported value")


def _merge(obj, data: dict, prefix: str):
    names = {f.name: f for f in fields(obj)}
    changes = {}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in names:
            raise ConfigError(f"unknown configuration key {path!r}")
        current = getattr(obj, key)
        if key in _NESTED and prefix == "":
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: expected a table")
            changes[key] = _merge(current, value, f"{path}.")
        else:
            changes[key] = _coerce(path, value, current)
    return dataclasses.replace(obj, **changes)


def from_dict(data: dict, base: SimConfig | None = None) -> SimConfig:
    cfg = _merge(base or SimConfig(), data, "")
    cfg.validate()
    return cfg


def load_config(path: str | Path | None, overrides: dict | None = None) -> SimConfig:
    """Read a JSON config file (empty file = defaults) and apply ``overrides`` on top."""
    data: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if text.strip():
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: top level must be an object")
    cfg = from_dict(data)
    if overrides:
        cfg = from_dict(overrides, base=cfg)
    return cfg


def to_dict(cfg: SimConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["scheme"] = cfg.scheme.value
    return out
