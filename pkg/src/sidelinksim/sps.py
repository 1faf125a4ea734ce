"""Sensing-based semi-persistent scheduling (sidelink Mode 2).

The resource grid is periodic: ``period_slots`` slots (100 with 1-ms slots)
times ``n_tb`` transport-block positions. A :class:`Resource` names one cell
of that grid; a vehicle reserving it transmits there once every RRP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigError, SimulationError

NEVER = -(10**12)


class Resource(NamedTuple):
    slot_in_period: int
    tb_index: int

    def index(self, n_tb: int) -> int:
        return self.slot_in_period * n_tb + self.tb_index

    @classmethod
    def from_index(cls, idx: int, n_tb: int) -> "Resource":
        return cls(int(idx) // n_tb, int(idx) % n_tb)


@dataclass(frozen=True)
class SpsConfig:
    selection_window_ms: int = 100
    sensing_window_ms: int = 1000
    exclusion_threshold_dbm: float = -110.0
    relax_step_db: float = 3.0
    candidate_fraction: float = 0.2
    counter_lo: int = 5  # at RRP 100 ms
    counter_hi: int = 15

    def validate(self) -> None:
        if not 0.0 < self.candidate_fraction <= 1.0:
            raise ConfigError("candidate_fraction must be in (0, 1]")
        if self.relax_step_db <= 0:
            raise ConfigError("relax_step_db must be > 0")
        if not 0 < self.counter_lo <= self.counter_hi:
            raise ConfigError("counter range must satisfy 0 < lo <= hi")
        if self.sensing_window_ms % 100 or self.sensing_window_ms <= 0:
            raise ConfigError("sensing_window_ms must be a positive multiple of 100")


def reselection_counter_range(rrp_ms: int, lo: int = 5, hi: int = 15) -> tuple[int, int]:
    """Integer range ``[lo*100/max(RRP,20), hi*100/max(RRP,20)]`` rounded inward."""
    scale = 100.0 / max(rrp_ms, 20)
    a, b = math.ceil(lo * scale - 1e-9), math.floor(hi * scale + 1e-9)
    a = max(a, 1)
    if a > b:
        raise ConfigError(f"empty re-selection counter range for RRP {rrp_ms} ms")
    return a, b


def draw_reselection_counter(rrp_ms: int, rng: np.random.Generator,
                             lo: int = 5, hi: int = 15) -> int:
    a, b = reselection_counter_range(rrp_ms, lo, hi)
    return int(rng.integers(a, b + 1))


@dataclass
class SlotObservation:
    """What one vehicle sensed in one slot.

    ``rssi_dbm`` holds one entry per TB position (``-inf`` when idle).
    ``decoded_reservations`` lists ``(vehicle_id, reserved Resource or None,
    rrp_ms)``; ``decoded_tbs`` lists ``(vehicle_id, tb_index)`` of every
    transmission decoded in the slot.
    """

    slot: int
    rssi_dbm: np.ndarray
    decoded_reservations: list = field(default_factory=list)
    decoded_tbs: list = field(default_factory=list)
    decoded_power_dbm: list = field(default_factory=list)
    measured: bool = True


class SensingBank:
    """Sensing memory for ``n`` vehicles, stored as dense arrays.

    RSSI is kept per (period, slot_in_period, tb) in a ring buffer spanning the
    sensing window. Only slots carrying energy, or slots in which the vehicle
    itself transmitted (``deaf``), need recording: cells stamped outside the
    window count as sensed-idle, so silent slots may be skipped entirely.
    Decoded reservations keep only the most recent one per resource.
    """

    def __init__(self, n: int, n_tb: int, period_slots: int = 100,
                 window_slots: int = 1000):
        if window_slots % period_slots:
            raise ConfigError("sensing window must span whole periods")
        self.n, self.n_tb, self.period = n, n_tb, period_slots
        self.window = window_slots
        self.n_periods = window_slots // period_slots
        self.n_res = period_slots * n_tb
        self.rssi_mw = np.zeros((n, self.n_periods, period_slots, n_tb), dtype=np.float32)
        self.stamp = np.full((n, self.n_periods, period_slots), NEVER, dtype=np.int64)
        self.deaf = np.zeros((n, self.n_periods, period_slots), dtype=bool)
        self.res_slot = np.full((n, self.n_res), NEVER, dtype=np.int64)
        self.res_power_dbm = np.full((n, self.n_res), -np.inf, dtype=np.float32)
        self.res_owner = np.full((n, self.n_res), -1, dtype=np.int32)
        self.res_rrp = np.zeros((n, self.n_res), dtype=np.int32)
        self.last_slot = np.full(n, NEVER, dtype=np.int64)

    def _cell(self, slot: int) -> tuple[int, int]:
        return (slot // self.period) % self.n_periods, slot % self.period

    def _check_order(self, rows, slot: int) -> None:
        if np.any(self.last_slot[rows] >= slot):
            raise SimulationError(f"out-of-order sensing observation at slot {slot}")
        self.last_slot[rows] = slot

    def record_rssi(self, slot: int, rssi_mw: np.ndarray, deaf: np.ndarray) -> None:
        """Store one slot of per-TB RSSI (mW) for every vehicle; ``deaf`` marks its transmitters."""
        self._check_order(slice(None), slot)
        w, p = self._cell(slot)
        self.rssi_mw[:, w, p, :] = np.where(deaf[:, None], 0.0, rssi_mw)
        self.stamp[:, w, p] = slot
        self.deaf[:, w, p] = deaf

    def record_reservation(self, rows, slot: int, res_idx: int, owner: int,
                           rrp_ms: int, power_dbm) -> None:
        self.res_slot[rows, res_idx] = slot
        self.res_power_dbm[rows, res_idx] = power_dbm
        self.res_owner[rows, res_idx] = owner
        self.res_rrp[rows, res_idx] = rrp_ms

    def observe(self, v: int, obs: SlotObservation) -> None:
        """Single-vehicle update from a :class:`SlotObservation`."""
        self._check_order(v, obs.slot)
        w, p = self._cell(obs.slot)
        if obs.measured:
            self.rssi_mw[v, w, p, :] = np.power(10.0, np.asarray(obs.rssi_dbm, dtype=float) / 10.0)
        else:
            self.rssi_mw[v, w, p, :] = 0.0
        self.stamp[v, w, p] = obs.slot
        self.deaf[v, w, p] = not obs.measured
        powers = obs.decoded_power_dbm or [np.inf] * len(obs.decoded_reservations)
        for (owner, res, rrp), pw in zip(obs.decoded_reservations, powers):
            if res is not None:
                self.record_reservation(v, obs.slot, res.index(self.n_tb), owner, rrp, pw)

    def average_rssi_mw(self, v: int, now: int) -> np.ndarray:
        """Mean RSSI per resource (flattened ``slot*n_tb + tb``) over the sensing window.

        Slots never heard in the window (deaf in every period) are ``inf``.
        """
        live = self.stamp[v] > now - self.window
        deaf = (live & self.deaf[v]).sum(axis=0)
        heard = self.n_periods - deaf
        tot = (self.rssi_mw[v] * live[:, :, None]).sum(axis=0, dtype=np.float64)
        avg = np.where(heard[:, None] > 0, tot / np.maximum(heard, 1)[:, None], np.inf)
        return avg.reshape(-1)

    def average_rssi_dbm(self, v: int, now: int) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.average_rssi_mw(v, now))

    def reserved(self, v: int, now: int) -> tuple[np.ndarray, np.ndarray]:
        """(mask of resources with a live decoded reservation, their RSRP proxy in dBm)."""
        live = self.res_slot[v] > now - self.window
        return live, self.res_power_dbm[v]


@dataclass
class SpsState:
    c_r: int = 0
    r_sps: Resource | None = None
    rrp_ms: int = 100
    p_keep: float = 0.8
    candidate_snapshot: list = field(default_factory=list)


def update_sensing(bank: SensingBank, vehicle: int, observation: SlotObservation) -> SensingBank:
    bank.observe(vehicle, observation)
    return bank


def select_resource(bank: SensingBank, vehicle: int, now: int, rng: np.random.Generator,
                    cfg: SpsConfig = SpsConfig()) -> tuple[Resource, list[Resource]]:
    """Pick a resource for the selection window starting at slot ``now``.

    Resources carrying a live decoded reservation whose power exceeds the
    exclusion threshold are removed; the threshold is raised by
    ``relax_step_db`` until at least ``candidate_fraction`` of the window
    survives. The survivors with the lowest average RSSI (that same
    fraction of the window, random tie-break) form the candidate list, and
    the choice is uniform over it.
    """
    n_res = bank.n_res
    need = int(math.ceil(cfg.candidate_fraction * n_res - 1e-9))
    live, power = bank.reserved(vehicle, now)
    thr = cfg.exclusion_threshold_dbm
    live_power = power[live]
    while True:
        excluded = np.zeros(n_res, dtype=bool)
        excluded[live] = live_power > thr
        if n_res - np.count_nonzero(excluded) >= need:
            break
        thr += cfg.relax_step_db
    survivors = np.flatnonzero(~excluded)
    rssi = bank.average_rssi_mw(vehicle, now)[survivors]
    order = np.lexsort((rng.random(survivors.size), rssi))
    best = survivors[order[:need]]
    choice = int(best[rng.integers(best.size)])
    candidates = [Resource.from_index(i, bank.n_tb) for i in np.sort(best)]
    return Resource.from_index(choice, bank.n_tb), candidates


def on_counter_expiry(state: SpsState, rng: np.random.Generator,
                      reselect: Callable[[], tuple[Resource, list[Resource]]],
                      cfg: SpsConfig = SpsConfig()) -> bool:
    """Keep ``r_sps`` with probability ``p_keep``, otherwise re-select.

    The counter is redrawn either way. Returns True when a new resource was
    selected.
    """
    if state.c_r != 0:
        raise SimulationError("counter expiry handled with c_r != 0")
    keep = state.r_sps is not None and rng.random() < state.p_keep
    if not keep:
        state.r_sps, state.candidate_snapshot = reselect()
    state.c_r = draw_reselection_counter(state.rrp_ms, rng, cfg.counter_lo, cfg.counter_hi)
    return not keep


def next_occurrence(res: Resource, window_start: int, period_slots: int = 100) -> int:
    """Absolute slot of the first occurrence of ``res`` at or after ``window_start``."""
    return window_start + (res.slot_in_period - window_start) % period_slots
