"""Scenario configuration for one simulation run."""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Raised when a scenario violates one of its invariants."""


class AttackKind(str, enum.Enum):
    NONE = "none"
    BLACKHOLE = "blackhole"
    FORGING = "forging"
    DROPPING = "dropping"
    FLOODING = "flooding"


PAUSE_TIMES = (0.0, 200.0, 400.0, 700.0)
MALICIOUS_COUNTS = (0, 5, 15, 25)
SAMPLING_INTERVALS = (5.0, 10.0, 15.0, 30.0)


@dataclass(frozen=True)
class SimConfig:
    area_side: float = 850.0
    node_count: int = 50
    radio_range: float = 250.0
    bandwidth: float = 2_000_000.0
    speed_min: float = 0.0
    speed_max: float = 20.0
    pause_time: float = 200.0
    duration: float = 700.0
    cbr_rate: float = 4.0
    cbr_size_min: int = 128
    cbr_size_max: int = 1024
    attack_kind: AttackKind = AttackKind.NONE
    malicious_count: int = 0
    sampling_interval: float = 10.0
    rng_seed: int = 0
    # protocol knobs not fixed by the scenario description
    route_lifetime: float = 10.0
    discovery_timeout: float = 1.0
    queue_capacity: int = 64
    attack_period: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "attack_kind", AttackKind(self.attack_kind))
        self.validate()

    def validate(self) -> None:
        if self.node_count < 1:
            raise ConfigError("node_count must be positive")
        if not 0 <= self.malicious_count < self.node_count:
            raise ConfigError("malicious_count < node_count violated "
                              f"({self.malicious_count} vs {self.node_count})")
        if self.attack_kind is AttackKind.NONE and self.malicious_count:
            raise ConfigError("malicious_count must be 0 when attack_kind is none")
        if self.attack_kind is not AttackKind.NONE and not self.malicious_count:
            raise ConfigError(f"attack_kind {self.attack_kind.value} needs malicious_count > 0")
        if not 0 <= self.speed_min <= self.speed_max:
            raise ConfigError("speed_min <= speed_max violated "
                              f"({self.speed_min} > {self.speed_max})")
        for name in ("area_side", "radio_range", "bandwidth", "duration", "cbr_rate",
                     "route_lifetime", "discovery_timeout", "attack_period"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.pause_time < 0:
            raise ConfigError("pause_time must be non-negative")
        if not 0 < self.cbr_size_min <= self.cbr_size_max:
            raise ConfigError("0 < cbr_size_min <= cbr_size_max violated")
        if not 0 < self.sampling_interval <= self.duration:
            raise ConfigError("0 < sampling_interval <= duration violated "
                              f"({self.sampling_interval} vs {self.duration})")
        ratio = self.duration / self.sampling_interval
        if not math.isclose(ratio, round(ratio), rel_tol=0, abs_tol=1e-9):
            raise ConfigError(
                f"duration {self.duration:g} is not an integer multiple of "
                f"sampling_interval {self.sampling_interval:g}")
        if self.queue_capacity < 1:
            raise ConfigError("queue_capacity must be positive")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must be a 64-bit unsigned integer")

    @property
    def interval_count(self) -> int:
        return int(round(self.duration / self.sampling_interval))

    @property
    def scenario_id(self) -> str:
        return (f"{self.attack_kind.value}-m{self.malicious_count}-p{self.pause_time:g}"
                f"-dt{self.sampling_interval:g}-s{self.rng_seed}")

    def replace(self, **changes) -> SimConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["attack_kind"] = self.attack_kind.value
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SimConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def load_config(path: str | Path) -> dict[str, Any]:
    """Read a JSON config file into a plain dict."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data
