"""Link budget, SINR and threshold decoding for sidelink transport blocks."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

SPEED_OF_LIGHT = 299_792_458.0
THERMAL_NOISE_DBM_HZ = -174.0


class Outcome(enum.IntEnum):
    RECEIVED = 0
    LOST_COLLISION = 1
    LOST_PROPAGATION = 2
    LOST_HALF_DUPLEX = 3


@dataclass(frozen=True)
class PhyConfig:
    bandwidth_mhz: float = 20.0
    n_subchannels: int = 10
    subchannels_per_tb: int = 2
    tx_power_dbm: float = 20.0
    antenna_gain_db: float = 3.0
    noise_figure_db: float = 9.0
    antenna_height_m: float = 1.5
    mcs_index: int = 7
    sinr_threshold_db: float = 5.0
    shadowing_stddev_los_db: float = 0.0
    shadowing_stddev_nlos_db: float = 4.0
    los: bool = True
    carrier_freq_ghz: float = 5.9
    rssi_busy_threshold_dbm: float = -94.0
    # "winner_b1" (two-slope) or "log_distance" (single slope)
    pathloss_model: str = "winner_b1"
    pl_min_distance_m: float = 3.0
    # WINNER+ B1 LOS, below breakpoint: A log10(d) + B + C log10(f/5)
    pl_near_slope: float = 22.7
    pl_near_intercept: float = 41.0
    pl_near_freq_coef: float = 20.0
    # above breakpoint: 40 log10(d) + 9.45 - 17.3 log10(h'tx) - 17.3 log10(h'rx) + 2.7 log10(f/5)
    pl_far_slope: float = 40.0
    pl_far_intercept: float = 9.45
    pl_far_height_coef: float = -17.3
    pl_far_freq_coef: float = 2.7
    pl_effective_height_offset_m: float = 1.0
    # single-slope alternative
    pl_logd_exponent: float = 2.0
    pl_logd_ref_db: float = 47.86

    @property
    def n_tb(self) -> int:
        return self.n_subchannels // self.subchannels_per_tb

    @property
    def tb_bandwidth_hz(self) -> float:
        return self.bandwidth_mhz * 1e6 * self.subchannels_per_tb / self.n_subchannels

    @property
    def shadowing_stddev_db(self) -> float:
        return self.shadowing_stddev_los_db if self.los else self.shadowing_stddev_nlos_db

    @property
    def breakpoint_m(self) -> float:
        h = self.antenna_height_m - self.pl_effective_height_offset_m
        return 4.0 * h * h * self.carrier_freq_ghz * 1e9 / SPEED_OF_LIGHT

    def validate(self) -> None:
        if self.n_subchannels <= 0 or self.subchannels_per_tb <= 0:
            raise ConfigError("phy subchannel counts must be positive")
        if self.n_subchannels % self.subchannels_per_tb:
            raise ConfigError("phy.n_subchannels must be a multiple of subchannels_per_tb")
        for name in ("tx_power_dbm", "antenna_gain_db", "noise_figure_db",
                     "sinr_threshold_db", "rssi_busy_threshold_dbm", "carrier_freq_ghz"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigError(f"phy.{name} must be finite")
        if self.pathloss_model not in ("winner_b1", "log_distance"):
            raise ConfigError(f"unknown phy.pathloss_model {self.pathloss_model!r}")
        if self.antenna_height_m <= self.pl_effective_height_offset_m:
            raise ConfigError("antenna height must exceed the effective-height offset")


def pathloss_db(d, cfg: PhyConfig):
    """Pathloss in dB; distances below ``pl_min_distance_m`` are clamped."""
    d = np.maximum(np.asarray(d, dtype=float), cfg.pl_min_distance_m)
    if cfg.pathloss_model == "log_distance":
        pl = cfg.pl_logd_ref_db + 10.0 * cfg.pl_logd_exponent * np.log10(d)
    else:
        f_rel = np.log10(cfg.carrier_freq_ghz / 5.0)
        h = cfg.antenna_height_m - cfg.pl_effective_height_offset_m
        lg = np.log10(d)
        near = cfg.pl_near_intercept + cfg.pl_near_freq_coef * f_rel
        far = (cfg.pl_far_intercept + 2.0 * cfg.pl_far_height_coef * np.log10(h)
               + cfg.pl_far_freq_coef * f_rel)
        beyond = d >= cfg.breakpoint_m
        pl = np.where(beyond, cfg.pl_far_slope * lg + far, cfg.pl_near_slope * lg + near)
    return float(pl) if pl.ndim == 0 else pl


def rx_power_dbm(distance, cfg: PhyConfig, shadowing_db=0.0):
    return (cfg.tx_power_dbm + 2.0 * cfg.antenna_gain_db
            - pathloss_db(distance, cfg) - shadowing_db)


def noise_floor_dbm(cfg: PhyConfig) -> float:
    return THERMAL_NOISE_DBM_HZ + 10.0 * np.log10(cfg.tb_bandwidth_hz) + cfg.noise_figure_db


def dbm_to_mw(x):
    return np.power(10.0, np.asarray(x, dtype=float) / 10.0)


def mw_to_dbm(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(x)
    return float(out) if out.ndim == 0 else out


def sinr_db(signal_dbm: float, interferer_powers_dbm, noise_dbm: float) -> float:
    interference = float(np.sum(dbm_to_mw(interferer_powers_dbm))) if len(interferer_powers_dbm) else 0.0
    return mw_to_dbm(dbm_to_mw(signal_dbm) / (dbm_to_mw(noise_dbm) + interference))


def subchannel_overlap(start_a, start_b, width: int):
    """Fraction of a ``width``-subchannel allocation at ``start_a`` overlapped by one at ``start_b``."""
    lo = np.maximum(start_a, start_b)
    hi = np.minimum(np.asarray(start_a) + width, np.asarray(start_b) + width)
    return np.clip(hi - lo, 0, None) / float(width)


@dataclass(frozen=True)
class Transmission:
    """Minimal view of a transmission for :func:`decode`."""

    tx_id: int
    position: float
    start_subchannel: int


def decode(tx: Transmission, rx_id: int, rx_position: float,
           concurrent: list[Transmission], cfg: PhyConfig, road_length: float,
           shadowing_db: float = 0.0) -> Outcome:
    """Outcome of ``tx`` at receiver ``rx_id`` given every transmission in the slot.

    ``concurrent`` may contain ``tx`` itself; it is skipped when summing
    interference.
    """
    from .scenario import ring_distance

    if rx_id == tx.tx_id:
        raise ValueError("receiver and transmitter must differ")
    if any(c.tx_id == rx_id for c in concurrent):
        return Outcome.LOST_HALF_DUPLEX
    width = cfg.subchannels_per_tb
    signal = rx_power_dbm(ring_distance(tx.position, rx_position, road_length), cfg, shadowing_db)
    interference_mw = 0.0
    for c in concurrent:
        if c.tx_id == tx.tx_id:
            continue
        frac = float(subchannel_overlap(tx.start_subchannel, c.start_subchannel, width))
        if frac <= 0:
            continue
        p = rx_power_dbm(ring_distance(c.position, rx_position, road_length), cfg)
        interference_mw += frac * float(dbm_to_mw(p))
    sinr = mw_to_dbm(dbm_to_mw(signal) / (dbm_to_mw(noise_floor_dbm(cfg)) + interference_mw))
    if sinr >= cfg.sinr_threshold_db:
        return Outcome.RECEIVED
    return Outcome.LOST_COLLISION if interference_mw > 0 else Outcome.LOST_PROPAGATION


def resolve_slot(power_mw: np.ndarray, overlap: np.ndarray, in_range: np.ndarray,
                 half_duplex: np.ndarray, noise_mw: float, threshold_db: float) -> np.ndarray:
    """Vectorised decode for every (transmission, receiver) pair in one slot.

    power_mw: (K, N) received power of transmission k at vehicle j, zero
        where j lies outside the evaluation radius of k.
    overlap: (K, K) subchannel-overlap fraction, zero diagonal.
    in_range: (K, N) receivers to classify.
    half_duplex: (N,) vehicles transmitting in this slot.

    Returns (K, N) int8 outcomes; entries outside ``in_range`` are -1.
    """
    interference = overlap @ power_mw
    thr = 10.0 ** (threshold_db / 10.0)
    out = np.full(power_mw.shape, int(Outcome.LOST_PROPAGATION), dtype=np.int8)
    out[interference > 0] = Outcome.LOST_COLLISION
    out[power_mw >= thr * (noise_mw + interference)] = Outcome.RECEIVED
    out[:, half_duplex] = Outcome.LOST_HALF_DUPLEX
    out[~in_range] = -1
    return out
