"""Ring-road highway scenario: vehicle placement, mobility and geometry."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

VD_RADIUS_M = 100.0


@dataclass(frozen=True)
class ScenarioConfig:
    density_rho: float = 100.0  # vehicles per km
    road_length: float = 2000.0  # m
    speed_mean: float = 50.0  # km/h
    speed_stddev: float = 3.0  # km/h

    @property
    def n_vehicles(self) -> int:
        return int(round(self.density_rho * self.road_length / 1000.0))

    def validate(self) -> None:
        if not self.road_length > 0:
            raise ConfigError("scenario.road_length must be > 0")
        if not self.density_rho > 0:
            raise ConfigError("scenario.density_rho must be > 0")
        if self.speed_stddev < 0:
            raise ConfigError("scenario.speed_stddev must be >= 0")
        if self.speed_mean <= 0:
            raise ConfigError("scenario.speed_mean must be > 0")
        if self.n_vehicles < 2:
            raise ConfigError(
                f"scenario yields {self.n_vehicles} vehicles; at least 2 required"
            )


@dataclass(frozen=True)
class VehicleKinematics:
    vehicle_id: int
    position: float  # m along the ring, in [0, road_length)
    speed: float  # m/s


_MIN_SPEED_MS = 0.1


def init_placement(cfg: ScenarioConfig, rng: np.random.Generator,
                   speed_rng: np.random.Generator | None = None) -> list[VehicleKinematics]:
    """Drop ``round(rho * L / 1000)`` vehicles uniformly on the ring.

    Speeds are Normal(speed_mean, speed_stddev) km/h, converted to m/s and
    clamped to stay strictly positive. They come from ``speed_rng`` when given.
    """
    cfg.validate()
    n = cfg.n_vehicles
    positions = rng.uniform(0.0, cfg.road_length, size=n)
    speeds = (speed_rng or rng).normal(cfg.speed_mean, cfg.speed_stddev, size=n) / 3.6
    speeds = np.maximum(speeds, _MIN_SPEED_MS)
    return [
        VehicleKinematics(i, float(positions[i]), float(speeds[i])) for i in range(n)
    ]


def advance(
    vehicles: list[VehicleKinematics], dt: float, road_length: float
) -> list[VehicleKinematics]:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return [
        replace(v, position=(v.position + v.speed * dt) % road_length) for v in vehicles
    ]


def ring_distance(a, b, road_length: float):
    """Shortest distance between positions ``a`` and ``b`` on the ring.

    Works elementwise on arrays (with broadcasting).
    """
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    d = np.minimum(d, road_length - d)
    if d.ndim == 0:
        return float(d)
    return d


def local_vehicle_density(
    self_id: int, vehicles: list[VehicleKinematics], road_length: float
) -> int:
    """Number of other vehicles within 100 m (inclusive) of ``self_id``."""
    me = next(v for v in vehicles if v.vehicle_id == self_id)
    pos = np.array([v.position for v in vehicles if v.vehicle_id != self_id])
    if pos.size == 0:
        return 0
    return int(np.count_nonzero(ring_distance(pos, me.position, road_length) <= VD_RADIUS_M))


def vd_counts(positions: np.ndarray, road_length: float) -> np.ndarray:
    """Vectorised ``local_vehicle_density`` for every vehicle at once."""
    d = ring_distance(positions[:, None], positions[None, :], road_length)
    return np.count_nonzero(d <= VD_RADIUS_M, axis=1) - 1


class RingTrace:
    """Closed-form ring mobility: position at slot ``t`` is ``x0 + v * t * slot_s``.

    Equivalent to calling :func:`advance` once per slot, without the per-slot
    cost or accumulation of rounding error.
    """

    def __init__(self, vehicles: list[VehicleKinematics], road_length: float, slot_s: float):
        self.x0 = np.array([v.position for v in vehicles], dtype=float)
        self.speed = np.array([v.speed for v in vehicles], dtype=float)
        self.road_length = float(road_length)
        self.slot_s = float(slot_s)

    def __len__(self) -> int:
        return self.x0.size

    def positions(self, slot: int) -> np.ndarray:
        return np.mod(self.x0 + self.speed * (slot * self.slot_s), self.road_length)
