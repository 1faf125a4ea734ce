"""Slot-level simulation loop tying mobility, MAC, PHY, sensing and metrics together."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import phy
from .config import SimConfig, to_dict
from .congestion import CongestionState, gate_and_quantize, itt_from_vd, quantize_rrp, update_avg_vd
from .errors import SimulationError
from .metrics import COLLISION_RANGE_M, MetricsAccumulator, PrrBins, colliding_pairs
from .oneshot import (
    Action,
    OneShotState,
    Scheme,
    apply_proposed_breakout,
    arm_occupancy_check,
    check_occupancy,
    decide_transmission,
    draw_oneshot_counter,
    select_oneshot_resource,
)
from .scenario import RingTrace, init_placement, ring_distance, vd_counts
from .sps import (
    Resource,
    SensingBank,
    SlotObservation,
    SpsState,
    next_occurrence,
    reselection_counter_range,
    select_resource,
)

PERIOD_SLOTS = 100
VD_EPOCH_SLOTS = 100
STREAM_NAMES = ("placement", "speeds", "counters", "selections", "oneshot", "shadowing")


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent named generators; the mapping does not depend on the scheme."""
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAM_NAMES, children)}


@dataclass
class TransmissionRecord:
    tx_id: int
    slot: int
    resource: Resource
    kind: str  # "reserved" | "one_shot"
    rrp_ms: int
    announced_reservation: tuple[Resource, int] | None = None

    @property
    def start_subchannel(self) -> int:
        return self.resource.tb_index * 2


@dataclass
class SimulationReport:
    scheme: str
    density: float
    seed: int
    config: dict
    pir_hist: dict[int, int]
    prr: PrrBins
    event_run_lengths: list[int]
    total_collisions: int
    mean_itt_s: float
    mean_tx_gap_s: float
    outcome_counts: dict[str, int]
    n_transmissions: int
    n_one_shot: int
    n_breakouts: int
    n_vehicles: int
    extra: dict = field(default_factory=dict)

    @property
    def persistent_run_lengths(self) -> list[int]:
        return [r for r in self.event_run_lengths if r >= 2]

    @property
    def mean_collisions_per_event(self) -> float:
        runs = self.persistent_run_lengths
        return float(np.mean(runs)) if runs else float("nan")


class Simulator:
    """One seeded run. Construct, optionally force state, then :meth:`run`.

    ``trace`` may be a writable text stream; one JSON object per transmission
    is written to it.
    """

    def __init__(self, cfg: SimConfig, trace=None, keep_log: bool = False):
        cfg.validate()
        self.cfg = cfg
        self.trace = trace
        self.keep_log = keep_log
        self.log: list[TransmissionRecord] = []
        self.rng = rng_streams(cfg.seed)
        vehicles = init_placement(cfg.scenario, self.rng["placement"], self.rng["speeds"])
        self.n = len(vehicles)
        self.L = cfg.scenario.road_length
        self.mobility = RingTrace(vehicles, self.L, cfg.slot_ms / 1000.0)
        self.n_tb = cfg.phy.n_tb
        self.bank = SensingBank(self.n, self.n_tb, PERIOD_SLOTS, cfg.sps.sensing_window_ms)
        self.metrics = MetricsAccumulator(self.n, cfg.warmup_slot, cfg.slot_ms)
        self.noise_mw = float(phy.dbm_to_mw(phy.noise_floor_dbm(cfg.phy)))
        self.slot = 0
        self._opp_at: dict[int, set[int]] = defaultdict(set)
        self.next_opp = np.zeros(self.n, dtype=np.int64)
        self._schedule: dict[int, list[TransmissionRecord]] = defaultdict(list)
        self._listen: dict[int, list[int]] = defaultdict(list)
        self._last_tx_slot = np.full(self.n, -1, dtype=np.int64)
        self.sps: list[SpsState] = []
        self.os: list[OneShotState] = []
        self.cc: list[CongestionState] = []
        self._init_mac()

    # -- setup ----------------------------------------------------------
    def _init_mac(self) -> None:
        cfg = self.cfg
        vd0 = vd_counts(self.mobility.positions(0), self.L)
        for v in range(self.n):
            cc = CongestionState(enabled=cfg.congestion_enabled)
            if cfg.congestion_enabled:
                cc.avg_vd = float(vd0[v])
                cc.itt_s = itt_from_vd(cc.avg_vd)
            cc.rrp_ms = quantize_rrp(cc.itt_s) if cfg.congestion_enabled else 100
            st = SpsState(rrp_ms=cc.rrp_ms, p_keep=cfg.p_keep)
            st.r_sps, st.candidate_snapshot = self._select(v, 0)
            _, hi = reselection_counter_range(st.rrp_ms, cfg.sps.counter_lo, cfg.sps.counter_hi)
            st.c_r = int(self.rng["counters"].integers(0, hi + 1))
            os_ = OneShotState(c_o=draw_oneshot_counter(self.rng["counters"]), scheme=cfg.scheme)
            self.sps.append(st)
            self.os.append(os_)
            self.cc.append(cc)
            self._set_opp(v, next_occurrence(st.r_sps, 0))

    def place(self, positions, speeds=None) -> None:
        """Override initial positions (m) and optionally speeds (m/s) before running."""
        self.mobility.x0 = np.mod(np.asarray(positions, dtype=float), self.L)
        if speeds is not None:
            self.mobility.speed = np.asarray(speeds, dtype=float)

    def force_reservation(self, v: int, resource: Resource, c_r: int | None = None,
                          c_o: int | None = None) -> None:
        """Put vehicle ``v`` on ``resource`` from the next occurrence onwards."""
        st = self.sps[v]
        st.r_sps = Resource(*resource)
        if st.r_sps not in st.candidate_snapshot:
            st.candidate_snapshot = sorted(st.candidate_snapshot + [st.r_sps])
        if c_r is not None:
            st.c_r = c_r
        if c_o is not None:
            self.os[v].c_o = c_o
        self._set_opp(v, next_occurrence(st.r_sps, self.slot))

    # -- helpers --------------------------------------------------------
    def _set_opp(self, v: int, slot: int) -> None:
        old = int(self.next_opp[v])
        self._opp_at[old].discard(v)
        if not self._opp_at[old]:
            del self._opp_at[old]
        self.next_opp[v] = slot
        self._opp_at[slot].add(v)

    def _select(self, v: int, now: int):
        return select_resource(self.bank, v, now, self.rng["selections"], self.cfg.sps)

    def _schedule_tx(self, rec: TransmissionRecord) -> None:
        slot_list = self._schedule[rec.slot]
        if any(r.tx_id == rec.tx_id for r in slot_list):
            raise SimulationError(f"vehicle {rec.tx_id} scheduled twice in slot {rec.slot}")
        slot_list.append(rec)

    # -- MAC ------------------------------------------------------------
    def _opportunity(self, v: int, t: int) -> None:
        st, os_, cc = self.sps[v], self.os[v], self.cc[v]
        transmit, rrp = gate_and_quantize(cc, t, self.cfg.slot_ms)
        if rrp != st.rrp_ms:
            st.rrp_ms = cc.rrp_ms = rrp
            st.r_sps, st.candidate_snapshot = self._select(v, t)
            lo, hi = reselection_counter_range(rrp, self.cfg.sps.counter_lo, self.cfg.sps.counter_hi)
            st.c_r = int(self.rng["counters"].integers(lo, hi + 1))
            s = next_occurrence(st.r_sps, t)
            if s > t:
                self._set_opp(v, s)
                return
        if not transmit:
            self._set_opp(v, t + st.rrp_ms)
            return
        dec = decide_transmission(st, os_, self.cfg.moving, self.rng["counters"],
                                  lambda: self._select(v, t), self.cfg.sps)
        if dec.action is Action.RESELECT_NOW:
            s = next_occurrence(st.r_sps, t)
            self._set_opp(v, s)
            if s == t:
                self._opportunity(v, t)
            return
        cc.last_tx_slot = t
        if dec.action is Action.RESERVED:
            self._schedule_tx(TransmissionRecord(v, t, st.r_sps, "reserved", st.rrp_ms,
                                                 (st.r_sps, st.rrp_ms)))
            self._set_opp(v, t + st.rrp_ms)
            return
        anchor = dec.anchor
        r_os = select_oneshot_resource(dec.anchor_candidates, anchor, self.rng["oneshot"],
                                       self.n_tb, PERIOD_SLOTS)
        t_os = t + (r_os.slot_in_period - anchor.slot_in_period) % PERIOD_SLOTS
        self._schedule_tx(TransmissionRecord(v, t_os, r_os, "one_shot", st.rrp_ms,
                                             (st.r_sps, st.rrp_ms)))
        if dec.reselected:
            self._set_opp(v, next_occurrence(st.r_sps, t + st.rrp_ms))
        else:
            self._set_opp(v, t + st.rrp_ms)
        if dec.arm_check:
            arm_occupancy_check(os_, anchor, t)
            self._listen[t].append(v)

    def _breakout_check(self, v: int, t: int, obs: SlotObservation) -> None:
        st, os_ = self.sps[v], self.os[v]
        r_sps, _ = os_.pending_occupancy_check
        occupied = check_occupancy(os_, obs, r_sps, self.cfg.phy.rssi_busy_threshold_dbm,
                                   self.cfg.rssi_detection)
        if apply_proposed_breakout(st, os_, occupied, self.rng["counters"],
                                   lambda: self._select(v, t), self.cfg.sps):
            self.metrics.n_breakouts += int(t >= self.cfg.warmup_slot)
            # the pending one-shot no longer advertises the abandoned resource
            for slot in range(t + 1, t + 4):
                for rec in self._schedule.get(slot, ()):
                    if rec.tx_id == v:
                        rec.announced_reservation = None
            self._set_opp(v, next_occurrence(st.r_sps, t + st.rrp_ms))

    # -- main loop ------------------------------------------------------
    def _vd_epoch(self, t: int) -> None:
        vd = vd_counts(self.mobility.positions(t), self.L)
        for v in range(self.n):
            update_avg_vd(self.cc[v], float(vd[v]))
        self.metrics.record_itt(t, np.array([c.itt_s for c in self.cc]))

    def step(self) -> None:
        t = self.slot
        if t % VD_EPOCH_SLOTS == 0:
            self._vd_epoch(t)
            self.metrics.expire_events(t)
        opp = self._opp_at.pop(t, None)
        if opp:
            for v in sorted(opp):
                self._opportunity(v, t)
        txs = self._schedule.pop(t, None)
        if txs:
            self._resolve(t, sorted(txs, key=lambda r: r.tx_id))
        elif self._listen.get(t):
            self._resolve(t, [])
        self.slot += 1

    def _resolve(self, t: int, txs: list[TransmissionRecord]) -> None:
        cfg = self.cfg
        pos = self.mobility.positions(t)
        listeners = self._listen.pop(t, [])
        k = len(txs)
        tx_ids = np.array([r.tx_id for r in txs], dtype=np.int64)
        tbs = np.array([r.resource.tb_index for r in txs], dtype=np.int64)
        half_duplex = np.zeros(self.n, dtype=bool)
        half_duplex[tx_ids] = True
        rssi = np.zeros((self.n, self.n_tb))
        if k:
            d = ring_distance(pos[tx_ids][:, None], pos[None, :], self.L)
            in_eval = d <= cfg.eval_radius_m
            in_eval[np.arange(k), tx_ids] = False
            shadow = 0.0
            sigma = cfg.phy.shadowing_stddev_db
            if sigma > 0:
                shadow = self.rng["shadowing"].normal(0.0, sigma, size=d.shape)
            p_dbm = phy.rx_power_dbm(d, cfg.phy, shadow)
            power = np.where(in_eval, np.power(10.0, p_dbm / 10.0), 0.0)
            # TB-aligned grid: allocations overlap fully or not at all
            overlap = (tbs[:, None] == tbs[None, :]).astype(float)
            np.fill_diagonal(overlap, 0.0)
            out = phy.resolve_slot(power, overlap, in_eval, half_duplex, self.noise_mw,
                                   cfg.phy.sinr_threshold_db)
            for i in range(k):
                rssi[:, tbs[i]] += power[i]
        self.bank.record_rssi(t, rssi, half_duplex)
        if not k:
            for v in listeners:
                obs = SlotObservation(t, phy.mw_to_dbm(rssi[v]))
                self._breakout_check(v, t, obs)
            return

        received = out == 0
        ann = [i for i, rec in enumerate(txs) if rec.announced_reservation is not None]
        if ann:
            ann = np.array(ann)
            ki, rows = np.nonzero(received[ann])
            if rows.size:
                sel = ann[ki]
                res_idx = np.array([txs[i].announced_reservation[0].index(self.n_tb) for i in ann])[ki]
                rrps = np.array([txs[i].announced_reservation[1] for i in ann])[ki]
                self.bank.record_reservation(rows, t, res_idx, tx_ids[sel], rrps, p_dbm[sel, rows])
        for v in listeners:
            hits = np.flatnonzero(received[:, v])
            obs = SlotObservation(
                t, phy.mw_to_dbm(rssi[v]),
                decoded_reservations=[(int(tx_ids[i]), txs[i].announced_reservation and
                                       txs[i].announced_reservation[0], txs[i].rrp_ms)
                                      for i in hits],
                decoded_tbs=[(int(tx_ids[i]), int(tbs[i])) for i in hits],
            )
            self._breakout_check(v, t, obs)

        m = self.metrics
        m.record_slot(t, tx_ids, out, d)
        for rec in txs:
            v = rec.tx_id
            prev = self._last_tx_slot[v]
            m.record_transmission(t, int(t - prev) if prev >= 0 else None, rec.kind == "one_shot")
            self._last_tx_slot[v] = t
        for i, j in colliding_pairs(tbs, d[:, tx_ids], COLLISION_RANGE_M):
            m.record_collision(t, int(tx_ids[i]), int(tx_ids[j]), txs[i].resource.index(self.n_tb),
                               max(txs[i].rrp_ms, txs[j].rrp_ms))
        if self.keep_log:
            self.log.extend(txs)
        if self.trace is not None:
            for i, rec in enumerate(txs):
                ann = rec.announced_reservation
                self.trace.write(json.dumps({
                    "slot": t, "tx": rec.tx_id, "kind": rec.kind,
                    "slot_in_period": rec.resource.slot_in_period, "tb": rec.resource.tb_index,
                    "rrp_ms": rec.rrp_ms,
                    "announce": None if ann is None else [ann[0].slot_in_period, ann[0].tb_index, ann[1]],
                    "received": np.flatnonzero(received[i]).tolist(),
                    "outcomes": np.bincount(out[i][out[i] >= 0], minlength=4).tolist(),
                }) + "\n")

    def run(self, until_slot: int | None = None) -> SimulationReport:
        end = self.cfg.n_slots if until_slot is None else until_slot
        sched, opp, listen = self._schedule, self._opp_at, self._listen
        while self.slot < end:
            t = self.slot
            if t % VD_EPOCH_SLOTS and t not in opp and t not in sched and t not in listen:
                self.slot += 1
                continue
            self.step()
        return self.report()

    def report(self) -> SimulationReport:
        m = self.metrics
        m.finish()
        cfg = self.cfg
        names = [o.name.lower() for o in phy.Outcome]
        return SimulationReport(
            scheme=cfg.scheme.value,
            density=cfg.scenario.density_rho,
            seed=cfg.seed,
            config=to_dict(cfg),
            pir_hist=dict(sorted(m.pir_counts.items())),
            prr=m.prr,
            event_run_lengths=[e.run_length for e in m.events],
            total_collisions=m.total_collisions,
            mean_itt_s=m.itt_sum / m.itt_count if m.itt_count else float("nan"),
            mean_tx_gap_s=(m.gap_sum / m.gap_count) * cfg.slot_ms / 1000.0 if m.gap_count else float("nan"),
            outcome_counts=dict(zip(names, m.outcome_counts.tolist())),
            n_transmissions=m.n_transmissions,
            n_one_shot=m.n_one_shot,
            n_breakouts=m.n_breakouts,
            n_vehicles=self.n,
        )


def run(cfg: SimConfig, trace=None) -> SimulationReport:
    return Simulator(cfg, trace=trace).run()
