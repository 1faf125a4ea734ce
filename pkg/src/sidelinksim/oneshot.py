"""One-shot transmission: the J3161/1 counter logic and the early-breakout variant.

The three schemes share one decision function. ``SPS_ONLY`` ignores the
one-shot counter, ``ONE_SHOT_J3161`` runs the standard three cases, and
``PROPOSED`` additionally listens on the vacated reserved resource after a
case-2 one-shot and re-selects at once when someone else is using it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .sps import Resource, SlotObservation, SpsConfig, SpsState, draw_reselection_counter

ONESHOT_LO, ONESHOT_HI = 2, 6
ONESHOT_SPAN_SLOTS = 3


class Scheme(str, enum.Enum):
    SPS_ONLY = "sps"
    ONE_SHOT_J3161 = "oneshot"
    PROPOSED = "proposed"


class Action(str, enum.Enum):
    RESERVED = "reserved"  # transmit on r_sps
    ONE_SHOT = "one_shot"  # transmit on R_os instead of r_sps
    RESELECT_NOW = "reselect_now"  # current packet moves to the freshly selected r_sps


@dataclass
class OneShotState:
    c_o: int = ONESHOT_HI
    scheme: Scheme = Scheme.ONE_SHOT_J3161
    # (r_sps, slot to listen on), armed only between a case-2 one-shot and that slot
    pending_occupancy_check: tuple[Resource, int] | None = None


@dataclass
class TransmissionDecision:
    action: Action
    case: int  # 0 default, 1..3 per the standard's cases
    reselected: bool = False
    arm_check: bool = False
    # r_sps and candidate snapshot in force before any re-selection; R_os is anchored here
    anchor: Resource | None = None
    anchor_candidates: list | None = None


def draw_oneshot_counter(rng: np.random.Generator) -> int:
    return int(rng.integers(ONESHOT_LO, ONESHOT_HI + 1))


def decide_transmission(sps: SpsState, os_: OneShotState, moving: bool,
                        rng: np.random.Generator,
                        reselect: Callable[[], tuple[Resource, list[Resource]]],
                        cfg: SpsConfig = SpsConfig()) -> TransmissionDecision:
    """Run the counter logic for one transmission opportunity, mutating both states.

    ``reselect`` performs SPS selection and returns ``(resource, candidates)``.
    A ``RESELECT_NOW`` decision means the current packet has not been sent:
    the caller schedules it on the new ``r_sps`` and asks again there.
    """

    def keep_or_reselect() -> bool:
        keep = sps.r_sps is not None and rng.random() < sps.p_keep
        if not keep:
            sps.r_sps, sps.candidate_snapshot = reselect()
        sps.c_r = draw_reselection_counter(sps.rrp_ms, rng, cfg.counter_lo, cfg.counter_hi)
        return not keep

    anchor, anchor_candidates = sps.r_sps, sps.candidate_snapshot
    if os_.scheme is Scheme.SPS_ONLY:
        case = 0
        if sps.c_r == 0:
            case = 3
            if keep_or_reselect():
                return TransmissionDecision(Action.RESELECT_NOW, 3, reselected=True)
        sps.c_r -= 1
        return TransmissionDecision(Action.RESERVED, case)

    if os_.c_o == 0 and sps.c_r == 0:
        os_.c_o = draw_oneshot_counter(rng)
        moved = keep_or_reselect()
        return TransmissionDecision(Action.ONE_SHOT, 1, reselected=moved,
                                    anchor=anchor, anchor_candidates=anchor_candidates)
    if os_.c_o == 0:
        os_.c_o = draw_oneshot_counter(rng)
        return TransmissionDecision(Action.ONE_SHOT, 2,
                                    arm_check=os_.scheme is Scheme.PROPOSED,
                                    anchor=anchor, anchor_candidates=anchor_candidates)
    case = 0
    if sps.c_r == 0:
        case = 3
        moved = keep_or_reselect()
        if moving:
            os_.c_o = draw_oneshot_counter(rng)
        if moved:
            return TransmissionDecision(Action.RESELECT_NOW, 3, reselected=True)
    sps.c_r -= 1
    os_.c_o -= 1
    return TransmissionDecision(Action.RESERVED, case)


def oneshot_span(r_sps: Resource, period_slots: int = 100) -> set[int]:
    return {(r_sps.slot_in_period + k) % period_slots for k in range(1, ONESHOT_SPAN_SLOTS + 1)}


def select_oneshot_resource(candidate_snapshot: list[Resource], r_sps: Resource,
                            rng: np.random.Generator, n_tb: int,
                            period_slots: int = 100) -> Resource:
    """Uniform pick among snapshot candidates in the 3 slots after ``r_sps``.

    Falls back to a uniform pick over every TB position in those 3 slots.
    """
    span = oneshot_span(r_sps, period_slots)
    pool = [r for r in candidate_snapshot if r.slot_in_period in span]
    if not pool:
        pool = [Resource((r_sps.slot_in_period + k) % period_slots, tb)
                for k in range(1, ONESHOT_SPAN_SLOTS + 1) for tb in range(n_tb)]
    return pool[int(rng.integers(len(pool)))]


def arm_occupancy_check(os_: OneShotState, r_sps: Resource, listen_slot: int) -> None:
    os_.pending_occupancy_check = (r_sps, listen_slot)


def check_occupancy(os_: OneShotState, observation: SlotObservation, r_sps: Resource,
                    rssi_busy_threshold_dbm: float = -94.0,
                    rssi_detection: bool = True) -> bool:
    """True when another vehicle was seen on ``r_sps`` in the listening slot.

    Seen means a decoded transmission on the same TB, or (when enabled) RSSI
    on that TB above ``rssi_busy_threshold_dbm``. Clears the pending flag.
    """
    os_.pending_occupancy_check = None
    if any(tb == r_sps.tb_index for _, tb in observation.decoded_tbs):
        return True
    if rssi_detection:
        return bool(observation.rssi_dbm[r_sps.tb_index] > rssi_busy_threshold_dbm)
    return False


def apply_proposed_breakout(sps: SpsState, os_: OneShotState, occupied: bool,
                            rng: np.random.Generator,
                            reselect: Callable[[], tuple[Resource, list[Resource]]],
                            cfg: SpsConfig = SpsConfig()) -> bool:
    """Leave an occupied reserved resource: unconditional re-selection, both counters redrawn.

    When the resource is free nothing changes. Returns True on breakout.
    """
    os_.pending_occupancy_check = None
    if not occupied:
        return False
    sps.r_sps, sps.candidate_snapshot = reselect()
    sps.c_r = draw_reselection_counter(sps.rrp_ms, rng, cfg.counter_lo, cfg.counter_hi)
    os_.c_o = draw_oneshot_counter(rng)
    return True
