"""Evaluation metrics: PIR, PRR distance bins, collision events, ITT."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .phy import Outcome

PRR_RANGE_M = 320.0
PRR_BIN_M = 20.0
N_PRR_BINS = int(PRR_RANGE_M / PRR_BIN_M)
COLLISION_RANGE_M = 500.0


@dataclass
class PirSample:
    tx_id: int
    rx_id: int
    gap_ms: int


@dataclass
class PrrBins:
    received: np.ndarray = field(default_factory=lambda: np.zeros(N_PRR_BINS, dtype=np.int64))
    expected: np.ndarray = field(default_factory=lambda: np.zeros(N_PRR_BINS, dtype=np.int64))

    @property
    def centers_m(self) -> np.ndarray:
        return (np.arange(N_PRR_BINS) + 0.5) * PRR_BIN_M

    @property
    def prr(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.expected > 0, self.received / np.maximum(self.expected, 1), np.nan)

    def __iadd__(self, other: "PrrBins") -> "PrrBins":
        self.received = self.received + other.received
        self.expected = self.expected + other.expected
        return self


@dataclass
class CollisionEvent:
    vehicle_a: int
    vehicle_b: int
    resource: int  # flattened resource index
    start_slot: int
    run_length: int = 1
    last_slot: int = 0
    gap: int = 100  # expected slots until the pair's next shared occurrence


def prr_bin(distance) -> np.ndarray:
    """20-m bin index for distances in (0, 320]; -1 outside."""
    d = np.asarray(distance, dtype=float)
    idx = np.ceil(d / PRR_BIN_M).astype(np.int64) - 1
    return np.where((d > 0) & (d <= PRR_RANGE_M), idx, -1)


class MetricsAccumulator:
    """Single-writer accumulator for one run.

    PIR is stored as a histogram of gaps in slots; ``last_rx[tx, rx]`` is the
    slot of the latest in-range reception of ``tx`` at ``rx`` (-1 when the
    pair has left the 320-m range since).
    """

    def __init__(self, n_vehicles: int, warmup_slot: int = 0, slot_ms: float = 1.0):
        self.n = n_vehicles
        self.warmup_slot = warmup_slot
        self.slot_ms = slot_ms
        self.last_rx = np.full((n_vehicles, n_vehicles), -1, dtype=np.int64)
        self._pir = np.zeros(1024, dtype=np.int64)
        self.prr = PrrBins()
        self.outcome_counts = np.zeros(len(Outcome), dtype=np.int64)
        self.total_collisions = 0
        self.events: list[CollisionEvent] = []
        self._active: dict[tuple[int, int], CollisionEvent] = {}
        self.itt_sum = 0.0
        self.itt_count = 0
        self.gap_sum = 0
        self.gap_count = 0
        self.n_transmissions = 0
        self.n_one_shot = 0
        self.n_breakouts = 0

    # ingestion --------------------------------------------------------
    def record_outcome(self, tx: int, rx: int, slot: int, outcome: Outcome, distance: float) -> None:
        out = np.full((1, self.n), -1, dtype=np.int64)
        dist = np.full((1, self.n), np.inf)
        out[0, rx], dist[0, rx] = int(outcome), distance
        self.record_slot(slot, np.array([tx]), out, dist, forget_far=False)

    def record_slot(self, slot: int, tx_ids: np.ndarray, outcomes: np.ndarray,
                    distance: np.ndarray, forget_far: bool = True) -> None:
        """Ingest every (transmission, receiver) outcome of one slot.

        ``outcomes`` is (K, N) with -1 for receivers that were not evaluated;
        ``distance`` is the matching (K, N) ring distance. With ``forget_far``
        the PIR history of pairs now beyond 320 m is dropped.
        """
        live = slot >= self.warmup_slot
        evaluated = outcomes >= 0
        in_range = evaluated & (distance <= PRR_RANGE_M) & (distance > 0)
        got = in_range & (outcomes == 0)
        if live:
            self.outcome_counts += np.bincount(outcomes[evaluated], minlength=len(Outcome))
            bins = np.ceil(distance[in_range] * (1.0 / PRR_BIN_M)).astype(np.int64) - 1
            self.prr.expected += np.bincount(bins, minlength=N_PRR_BINS)
            self.prr.received += np.bincount(bins[got[in_range]], minlength=N_PRR_BINS)
        ki, ri = np.nonzero(got)
        if ki.size:
            txv = tx_ids[ki]
            prev = self.last_rx[txv, ri]
            if live:
                gaps = slot - prev[prev >= 0]
                if gaps.size:
                    self._add_gaps(gaps)
            self.last_rx[txv, ri] = slot
        if forget_far:
            fk, fr = np.nonzero(distance > PRR_RANGE_M)
            self.last_rx[tx_ids[fk], fr] = -1

    def _add_gaps(self, gaps: np.ndarray) -> None:
        top = int(gaps.max())
        if top >= self._pir.size:
            grown = np.zeros(max(top + 1, 2 * self._pir.size), dtype=np.int64)
            grown[: self._pir.size] = self._pir
            self._pir = grown
        b = np.bincount(gaps)
        self._pir[: b.size] += b

    @property
    def pir_counts(self) -> dict[int, int]:
        nz = np.flatnonzero(self._pir)
        return dict(zip(nz.tolist(), self._pir[nz].tolist()))

    def forget_out_of_range(self, tx: int, far_rx: np.ndarray) -> None:
        """Drop PIR history for receivers now beyond 320 m of ``tx``."""
        self.last_rx[tx, far_rx] = -1

    def record_transmission(self, slot: int, gap_slots: int | None, one_shot: bool) -> None:
        if slot < self.warmup_slot:
            return
        self.n_transmissions += 1
        self.n_one_shot += int(one_shot)
        if gap_slots is not None:
            self.gap_sum += gap_slots
            self.gap_count += 1

    def record_itt(self, slot: int, itt_values: np.ndarray) -> None:
        if slot < self.warmup_slot:
            return
        self.itt_sum += float(np.sum(itt_values))
        self.itt_count += int(np.size(itt_values))

    def record_collision(self, slot: int, a: int, b: int, resource: int, gap: int) -> None:
        """One colliding transmission pair within the collision range.

        Consecutive collisions of the same pair on the same resource, exactly
        ``gap`` slots apart (the longer of the pair's RRPs), extend one event.
        """
        if a > b:
            a, b = b, a
        if slot >= self.warmup_slot:
            self.total_collisions += 1
        key = (a, b)
        ev = self._active.get(key)
        if ev is not None and ev.resource == resource and slot == ev.last_slot + ev.gap:
            ev.run_length += 1
            ev.last_slot = slot
            ev.gap = gap
            return
        if ev is not None:
            self._close(ev)
        self._active[key] = CollisionEvent(a, b, resource, slot, 1, slot, gap)

    def expire_events(self, slot: int) -> None:
        """Close events whose next expected collision slot has passed."""
        stale = [k for k, ev in self._active.items() if slot > ev.last_slot + ev.gap]
        for k in stale:
            self._close(self._active.pop(k))

    def _close(self, ev: CollisionEvent) -> None:
        if ev.start_slot >= self.warmup_slot:
            self.events.append(ev)

    def finish(self) -> None:
        for ev in self._active.values():
            self._close(ev)
        self._active.clear()
        self.events.sort(key=lambda e: (e.start_slot, e.vehicle_a, e.vehicle_b))


def pir_ccdf(samples) -> list[tuple[int, float]]:
    """Empirical ``P(PIR > gap)`` at each observed gap.

    ``samples`` is either a sequence of gaps or a ``{gap: count}`` histogram.
    """
    if isinstance(samples, dict):
        hist = samples
    else:
        gaps, counts = np.unique(np.asarray(samples, dtype=np.int64), return_counts=True)
        hist = dict(zip(gaps.tolist(), counts.tolist()))
    if not hist:
        return []
    gaps = np.array(sorted(hist), dtype=np.int64)
    counts = np.array([hist[g] for g in gaps], dtype=np.float64)
    total = counts.sum()
    exceed = (total - np.cumsum(counts)) / total
    return [(int(g), float(p)) for g, p in zip(gaps, exceed)]


def pir_tail_quantile(hist: dict[int, int], exceed_prob: float) -> int:
    """Smallest gap ``g`` with ``P(PIR > g) <= exceed_prob``."""
    for g, p in pir_ccdf(hist):
        if p <= exceed_prob:
            return g
    raise ValueError("empty PIR histogram")


def merge_pir(hists) -> dict[int, int]:
    out: dict[int, int] = {}
    for h in hists:
        for g, c in h.items():
            out[int(g)] = out.get(int(g), 0) + int(c)
    return out


def colliding_pairs(tb_index: np.ndarray, pair_distance: np.ndarray,
                    collision_range: float = COLLISION_RANGE_M) -> list[tuple[int, int]]:
    """Index pairs (i < j) of same-slot transmissions that collide.

    Allocations are TB-aligned, so two transmissions overlap in frequency iff
    they use the same TB. ``pair_distance`` is the (K, K) distance between
    the transmitters.
    """
    tb = np.asarray(tb_index)
    hit = (tb[:, None] == tb[None, :]) & (np.asarray(pair_distance) <= collision_range)
    ii, jj = np.nonzero(np.triu(hit, 1))
    return list(zip(ii.tolist(), jj.tolist()))


def collision_events_from_log(records, distance_fn, n_tb: int = 5, warmup_slot: int = 0,
                              collision_range: float = COLLISION_RANGE_M):
    """Rebuild ``(events, total_collisions)`` from a transmission log.

    ``records`` carry ``tx_id``, ``slot``, ``resource`` and ``rrp_ms`` (see
    ``engine.TransmissionRecord``); ``distance_fn(slot, a, b)`` gives the
    distance between vehicles ``a`` and ``b`` at ``slot``.
    """
    from collections import defaultdict

    acc = MetricsAccumulator(1, warmup_slot)
    by_slot = defaultdict(list)
    for r in records:
        by_slot[r.slot].append(r)
    last_epoch = -1
    for slot in sorted(by_slot):
        # the engine expires events on the 100-slot grid; mirror that here
        epoch = slot - slot % 100
        if epoch != last_epoch:
            acc.expire_events(epoch)
            last_epoch = epoch
        recs = sorted(by_slot[slot], key=lambda r: r.tx_id)
        k = len(recs)
        dist = np.zeros((k, k))
        for i in range(k):
            for j in range(i + 1, k):
                dist[i, j] = dist[j, i] = distance_fn(slot, recs[i].tx_id, recs[j].tx_id)
        tbs = np.array([r.resource.tb_index for r in recs])
        for i, j in colliding_pairs(tbs, dist, collision_range):
            a, b = recs[i], recs[j]
            acc.record_collision(slot, a.tx_id, b.tx_id, a.resource.index(n_tb),
                                 max(a.rrp_ms, b.rrp_ms))
    acc.finish()
    return acc.events, acc.total_collisions
