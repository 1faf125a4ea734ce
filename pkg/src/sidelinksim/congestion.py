"""J3161/1 inter-transmission-time congestion control."""

from __future__ import annotations

from dataclasses import dataclass

from .sps import NEVER

VD_EWMA_WEIGHT = 0.05
ITT_MIN_S, ITT_MAX_S = 0.1, 0.6
GRID_EPSILON_MS = 0.5


@dataclass
class CongestionState:
    avg_vd: float = 0.0
    itt_s: float = ITT_MIN_S
    last_tx_slot: int = NEVER
    rrp_ms: int = 100
    enabled: bool = True


def update_avg_vd(state: CongestionState, vd_instant: float) -> CongestionState:
    if vd_instant < 0:
        raise ValueError("vehicle density cannot be negative")
    state.avg_vd = VD_EWMA_WEIGHT * vd_instant + (1.0 - VD_EWMA_WEIGHT) * state.avg_vd
    state.itt_s = itt_from_vd(state.avg_vd) if state.enabled else ITT_MIN_S
    return state


def itt_from_vd(avg_vd: float) -> float:
    if avg_vd <= 25:
        return ITT_MIN_S
    if avg_vd < 150:
        return avg_vd / 250.0
    return ITT_MAX_S


def quantize_rrp(itt_s: float) -> int:
    """Nearest allowed reservation period (a multiple of 100 ms, at least 100 ms)."""
    return 100 * max(1, int(round(itt_s / 0.1 + 1e-9)))


def gate_and_quantize(state: CongestionState, now_slot: int,
                      slot_ms: float = 1.0) -> tuple[bool, int]:
    """(transmit?, rrp_ms) at a reserved-grid opportunity.

    Transmission is allowed once at least one ITT (minus half a slot) has
    passed since the last one.
    """
    if not state.enabled:
        return True, 100
    rrp = quantize_rrp(state.itt_s)
    elapsed_ms = (now_slot - state.last_tx_slot) * slot_ms
    return elapsed_ms >= state.itt_s * 1000.0 - GRID_EPSILON_MS, rrp
