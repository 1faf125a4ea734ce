"""Closed-form and Monte-Carlo oracles for persistent-collision breakout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BreakoutModel:
    p_keep: float = 0.8
    counter_range: tuple[int, int] = (5, 15)
    period_ms: float = 100.0

    @property
    def p(self) -> float:
        return 1.0 - self.p_keep

    def validate(self) -> None:
        if not 0.0 <= self.p_keep < 1.0:
            raise ValueError("p_keep must lie in [0, 1)")
        lo, hi = self.counter_range
        if not 0 < lo <= hi:
            raise ValueError("counter range must satisfy 0 < lo <= hi")


def expected_shorter_run(p_keep: float) -> float:
    """Mean number of packet runs until the first of two vehicles re-selects: 1/(2p - p^2)."""
    if not 0.0 <= p_keep < 1.0:
        raise ValueError("p_keep must lie in [0, 1)")
    p = 1.0 - p_keep
    return 1.0 / (2.0 * p - p * p)


def min_geometric_mc(p_keep: float, n_trials: int, rng: np.random.Generator) -> float:
    """Monte-Carlo mean of min(l1, l2), l_i ~ Geometric(1 - p_keep) on {1, 2, ...}."""
    p = 1.0 - p_keep
    l1 = rng.geometric(p, size=n_trials)
    l2 = rng.geometric(p, size=n_trials)
    return float(np.minimum(l1, l2).mean())


def min_counter_mean(lo: int, hi: int) -> float:
    """Exact E[min(X1, X2)] for independent uniform integers on [lo..hi], by enumeration."""
    if lo > hi:
        raise ValueError("lo must not exceed hi")
    vals = np.arange(lo, hi + 1)
    return float(np.minimum.outer(vals, vals).mean())


def summed_run_lengths(runs: np.ndarray, lo: int, hi: int, rng: np.random.Generator) -> np.ndarray:
    """For each entry ``k`` of ``runs``, the sum of ``k`` iid uniform integers on [lo..hi]."""
    runs = np.asarray(runs, dtype=np.int64)
    flat = rng.integers(lo, hi + 1, size=int(runs.sum()))
    return np.add.reduceat(flat, np.cumsum(runs) - runs)


def skewness(x) -> float:
    c = np.asarray(x, dtype=float) - np.mean(x)
    return float((c**3).mean() / (c**2).mean() ** 1.5)


@dataclass
class BreakoutStats:
    mean_s: float
    quantiles_s: dict[float, float]
    histogram: tuple[np.ndarray, np.ndarray]  # (counts, bin edges) of transmissions
    skewness: float
    mean_runs: float


def breakout_time_stats(model: BreakoutModel, n_trials: int, rng: np.random.Generator,
                        quantiles=(0.5, 0.9, 0.99, 0.999)) -> BreakoutStats:
    """Time until two vehicles sharing a resource stop sharing it.

    Each vehicle keeps the resource for a geometric number of packet runs,
    each run drawing its length uniformly from ``counter_range``. The shared
    stretch lasts as many runs as the shorter vehicle keeps it, so its length
    in transmissions is the sum of that many run lengths.
    """
    model.validate()
    if n_trials < 10_000:
        raise ValueError("n_trials must be at least 1e4")
    lo, hi = model.counter_range
    runs = np.minimum(rng.geometric(model.p, size=n_trials), rng.geometric(model.p, size=n_trials))
    totals = summed_run_lengths(runs, lo, hi, rng)
    seconds = totals * model.period_ms / 1000.0
    qs = {q: float(np.quantile(seconds, q)) for q in quantiles}
    skew = skewness(totals)
    hist = np.histogram(totals, bins=np.arange(lo, totals.max() + 2))
    return BreakoutStats(float(seconds.mean()), qs, hist, skew, float(runs.mean()))


def fig1_table(p_keeps, n_trials: int, rng: np.random.Generator,
               counter_range=(5, 15), period_ms: float = 100.0) -> list[dict]:
    """Rows of (p_keep, mean breakout, q99, q999), the data behind the breakout-time figure."""
    rows = []
    for pk in p_keeps:
        st = breakout_time_stats(BreakoutModel(float(pk), tuple(counter_range), period_ms),
                                 n_trials, rng, quantiles=(0.99, 0.999))
        rows.append({
            "p_keep": float(pk),
            "mean_breakout_s": st.mean_s,
            "analytic_mean_s": expected_shorter_run(float(pk)) * (sum(counter_range) / 2)
            * period_ms / 1000.0,
            "q99": st.quantiles_s[0.99],
            "q999": st.quantiles_s[0.999],
        })
    return rows
