import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sidelinksim.analytic import (
    BreakoutModel, breakout_time_stats, expected_shorter_run, fig1_table, min_counter_mean,
    min_geometric_mc, skewness, summed_run_lengths,
)


@pytest.mark.parametrize("pk,want", [(0.0, 1.0), (0.8, 1 / 0.36), (0.5, 1 / 0.75)])
def test_shorter_run_closed_form(pk, want):
    assert expected_shorter_run(pk) == pytest.approx(want)


def test_shorter_run_undefined_at_one():
    with pytest.raises(ValueError):
        expected_shorter_run(1.0)


def test_shorter_run_is_mean_of_min_by_series():
    # E[min] = sum_k P(min >= k) = sum_k (p_keep^2)^(k-1)
    for pk in (0.2, 0.6, 0.8):
        series = sum((pk * pk) ** (k - 1) for k in range(1, 2000))
        assert expected_shorter_run(pk) == pytest.approx(series)


def brute_min_mean(lo, hi):
    vals = range(lo, hi + 1)
    pairs = list(itertools.product(vals, vals))
    return sum(min(a, b) for a, b in pairs) / len(pairs)


def test_min_counter_mean_oneshot_range():
    assert min_counter_mean(2, 6) == pytest.approx(3.2)
    assert min_counter_mean(2, 6) == pytest.approx(brute_min_mean(2, 6))


def test_min_counter_mean_reselection_range():
    assert min_counter_mean(5, 15) == pytest.approx(5 + 385 / 121)
    assert min_counter_mean(5, 15) == pytest.approx(8.181818, abs=1e-6)


@given(st.integers(0, 50), st.integers(0, 20))
def test_min_counter_mean_below_midpoint(lo, width):
    hi = lo + width
    m = min_counter_mean(lo, hi)
    if width == 0:
        assert m == lo
    else:
        assert m < (lo + hi) / 2
    assert m == pytest.approx(brute_min_mean(lo, hi))


def test_min_counter_mean_rejects_empty_range():
    with pytest.raises(ValueError):
        min_counter_mean(3, 2)


def test_geometric_min_monte_carlo():
    rng = np.random.default_rng(11)
    for pk in (0.0, 0.4, 0.8):
        assert min_geometric_mc(pk, 200_000, rng) == pytest.approx(expected_shorter_run(pk), rel=0.01)


def test_breakout_mean_at_default_keep():
    st_ = breakout_time_stats(BreakoutModel(0.8), 200_000, np.random.default_rng(2))
    assert st_.mean_s == pytest.approx(expected_shorter_run(0.8) * 10 * 0.1, rel=0.02)
    assert st_.mean_s == pytest.approx(2.78, rel=0.02)
    assert st_.quantiles_s[0.99] > st_.quantiles_s[0.9] > st_.quantiles_s[0.5]


def test_breakout_without_keep_is_one_run():
    st_ = breakout_time_stats(BreakoutModel(0.0), 50_000, np.random.default_rng(3))
    assert st_.mean_runs == 1.0
    assert st_.mean_s == pytest.approx(1.0, rel=0.01)
    counts, edges = st_.histogram
    assert edges[0] == 5 and counts.sum() == 50_000


def test_breakout_needs_enough_trials():
    with pytest.raises(ValueError):
        breakout_time_stats(BreakoutModel(), 100, np.random.default_rng(0))


def test_model_validation():
    with pytest.raises(ValueError):
        BreakoutModel(p_keep=1.0).validate()
    with pytest.raises(ValueError):
        BreakoutModel(counter_range=(6, 5)).validate()


def test_summed_runs_tend_to_normal():
    rng = np.random.default_rng(4)
    # skewness of a k-fold uniform sum is zero; excess kurtosis decays like 1/k
    kurt = []
    for k in (1, 4, 32):
        x = summed_run_lengths(np.full(100_000, k), 5, 15, rng)
        assert abs(skewness(x)) < 0.05
        c = x - x.mean()
        kurt.append((c**4).mean() / (c**2).mean() ** 2 - 3)
    assert abs(kurt[2]) < abs(kurt[1]) < abs(kurt[0])


def test_fig1_rows_monotone():
    rows = fig1_table(np.linspace(0, 0.8, 5), 50_000, np.random.default_rng(5))
    means = [r["mean_breakout_s"] for r in rows]
    assert all(b > a for a, b in zip(means, means[1:]))
    for r in rows:
        assert r["mean_breakout_s"] == pytest.approx(r["analytic_mean_s"], rel=0.03)
        assert r["q999"] >= r["q99"]
