import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mdiqn.finitekey import (
    DecoyEstimator,
    InfeasibleError,
    binary_entropy,
    chernoff_delta,
    estimate_e11ph_upper,
    estimate_s11_lower,
    expectation_bounds,
    finite_key_pipeline,
    h_interval,
    key_rate,
)
from mdiqn.model import Counts, DataError, GainTally, LinkModel, X_PAIRS
from mdiqn.photonic import simulate_tally

B = 23.7189981105004  # -ln(5e-11)


def test_chernoff_delta_values():
    assert chernoff_delta(1e6, 1e-10) == pytest.approx(6.89939438961796e-3, abs=1e-12)
    assert chernoff_delta(1e10, 1e-10) == pytest.approx(6.88764327625781e-5, rel=1e-10)


def test_chernoff_delta_decreasing():
    grid = np.logspace(0, 12, 10)
    d = [chernoff_delta(n, 1e-10) for n in grid]
    assert all(a > b for a, b in zip(d, d[1:]))


@pytest.mark.parametrize("args", [(0, 1e-10), (10, 0.0), (10, 1.0)])
def test_chernoff_delta_rejects(args):
    with pytest.raises(ValueError):
        chernoff_delta(*args)


def test_expectation_bounds_table_value():
    cb = expectation_bounds(87788209, 1705548000000)
    assert cb.b == pytest.approx(B, rel=1e-13)
    assert cb.observed == pytest.approx(5.14721420915741e-5, rel=1e-12)
    assert cb.delta == pytest.approx(7.35232821011627e-4, rel=1e-10)
    assert cb.lower == pytest.approx(5.14343258870553e-5, rel=1e-10)
    assert cb.upper == pytest.approx(5.15100139444368e-5, rel=1e-10)
    assert 5.135e-5 <= cb.lower and cb.upper <= 5.159e-5


def test_expectation_bounds_edges():
    cb = expectation_bounds(0, 1705548000000)
    assert cb.lower == 0 and cb.upper == pytest.approx(1.39069660370159e-11, rel=1e-10)
    full = expectation_bounds(10**12, 10**12)
    assert full.lower == pytest.approx(1 / (1 + full.delta)) and full.lower < 1
    with pytest.raises(ValueError):
        expectation_bounds(0, 0)
    with pytest.raises(ValueError):
        expectation_bounds(5, 4)


@given(st.integers(0, 10**9), st.integers(1, 10**12), st.floats(1e-15, 0.5))
def test_bounds_contain_observed(k, n, eps):
    k = min(k, n)
    cb = expectation_bounds(k, n, eps)
    assert cb.lower <= k / n <= cb.upper <= 1


@given(st.integers(1, 10**8), st.floats(1e-12, 0.1))
def test_width_shrinks_with_counts(k, eps):
    n = 10**13
    w1 = expectation_bounds(k, n, eps)
    w4 = expectation_bounds(4 * k, n, eps)
    assert (w4.upper - w4.lower) / (4 * k / n) < (w1.upper - w1.lower) / (k / n)


def test_binary_entropy():
    assert binary_entropy(0) == 0 and binary_entropy(1) == 0
    assert binary_entropy(0.5) == 1
    assert binary_entropy(0.1455) == pytest.approx(0.598463527776671, abs=1e-12)
    with pytest.raises(ValueError):
        binary_entropy(1.2)
    grid = np.linspace(0, 1, 101)
    h = np.array([binary_entropy(p) for p in grid])
    assert np.allclose(h, h[::-1])
    assert (np.diff(h, 2) <= 1e-12).all()


def test_key_rate_table_column():
    rep = key_rate(1.02e-4, 0.1455, 87788209 / 1705548000000, 256301 / 87788209, 0.636, 0.754)
    assert rep.rate_per_pulse == pytest.approx(1.66251136438296e-6, rel=1e-9)
    assert rep.rate_bps == pytest.approx(rep.rate_per_pulse * 1e8)


def test_key_rate_limits():
    assert key_rate(0.0, 0.1, 1e-4, 0.01, 0.6, 0.7).rate_per_pulse == 0.0
    z, pz, s = 0.6, 0.7, 1e-3
    assert key_rate(s, 0.0, 1e-4, 0.0, z, pz).rate_per_pulse == pytest.approx(
        pz * pz * z * z * math.exp(-2 * z) * s)
    assert key_rate(s, 0.9, 1e-4, 0.0, z, pz).e11ph_upper == 0.5
    with pytest.raises(ValueError):
        key_rate(s, 0.1, 1e-4, 0.0, z, pz, f=0.9)


@given(st.floats(1e-5, 1e-3), st.floats(0, 0.5), st.floats(0, 0.05), st.floats(1.0, 1.5))
def test_key_rate_monotone(s11, e11, ezz, f):
    base = key_rate(s11, e11, 5e-5, ezz, 0.636, 0.754, f).rate_per_pulse
    assert key_rate(s11 * 1.1, e11, 5e-5, ezz, 0.636, 0.754, f).rate_per_pulse >= base
    assert key_rate(s11, min(0.5, e11 + 0.01), 5e-5, ezz, 0.636, 0.754, f).rate_per_pulse <= base
    assert key_rate(s11, e11, 5e-5, min(0.5, ezz + 0.01), 0.636, 0.754, f).rate_per_pulse <= base
    assert key_rate(s11, e11, 5e-5, ezz, 0.636, 0.754, f + 0.1).rate_per_pulse <= base


def test_h_interval(ab_tally, protocol):
    h = h_interval(ab_tally, protocol)
    assert h.a0 == h.b0 == pytest.approx(math.exp(-0.054))
    assert 0 < h.h_low < h.h_high
    pooled = expectation_bounds(5923, 2 * ab_tally["x", "o"].sent)
    assert h.h_low == pytest.approx(2 * h.a0 * pooled.lower - h.a0 ** 2 * B / ab_tally["o", "o"].sent)


def test_h_interval_zero_tally(protocol):
    zero = GainTally({p: Counts(10**9, 0, 0) for p in (("o", "x"), ("x", "o"), ("o", "o"))})
    h = h_interval(zero, protocol)
    assert h.h_low == pytest.approx(-h.a0 * h.b0 * B / 1e9) and h.h_low <= 0 <= h.h_high
    with pytest.raises(DataError):
        h_interval(GainTally({("o", "o"): Counts(1, 0, 0)}), protocol)


def test_table_column_bounds(ab_tally, protocol):
    s11 = estimate_s11_lower(ab_tally, protocol)
    assert 1.02e-4 / 2 <= s11 <= 2 * 1.02e-4
    e11 = estimate_e11ph_upper(ab_tally, protocol)
    assert 0.07 <= e11 <= 0.30
    # dividing the widest T_11 by the smallest s11 is sound but looser
    assert estimate_e11ph_upper(ab_tally, protocol, s11_lower=s11) >= e11


def test_pipeline_table_column(ab_tally, protocol):
    rep = finite_key_pipeline(ab_tally, protocol)
    assert rep.rate_per_pulse == pytest.approx(1.64e-6, rel=0.25)
    assert rep.h_low <= rep.h_value <= rep.h_high
    assert 0 <= rep.e11ph_upper <= 0.5


def test_pipeline_errors(protocol, ab_tally):
    with pytest.raises(DataError):
        finite_key_pipeline(GainTally({}), protocol)
    no_zz = GainTally({k: v for k, v in ab_tally.entries.items() if k != ("z", "z")})
    with pytest.raises(DataError):
        finite_key_pipeline(no_zz, protocol)


def test_pipeline_monotone_in_epsilon(ab_tally, protocol):
    rates = [finite_key_pipeline(ab_tally, protocol, eps).rate_per_pulse for eps in (1e-12, 1e-10, 1e-6)]
    assert rates[0] <= rates[1] <= rates[2]


def test_inconsistent_tally_is_infeasible(ab_tally, protocol):
    bad = dict(ab_tally.entries)
    bad[("y", "y")] = Counts(bad[("y", "y")].sent, 10 * bad[("y", "y")].success, 0)
    bad[("o", "y")] = Counts(bad[("o", "y")].sent, 0, 0)
    bad[("y", "o")] = Counts(bad[("y", "o")].sent, 0, 0)
    with pytest.raises(InfeasibleError):
        finite_key_pipeline(GainTally(bad), protocol)


def test_analytic_tally_rate_order(protocol):
    tally = simulate_tally(LinkModel.symmetric(30.0), protocol, 3 * 10**12, 0, mode="analytic")
    rate = finite_key_pipeline(tally, protocol).rate_per_pulse
    assert 1e-7 < rate < 1e-4


def test_estimator_requires_sources(ab_tally, protocol):
    partial = GainTally({k: v for k, v in ab_tally.entries.items() if k != ("y", "y")})
    with pytest.raises(DataError):
        DecoyEstimator(partial, protocol)
    with pytest.raises(ValueError):
        DecoyEstimator(ab_tally, protocol, n_cut=1)


def test_widening_intervals_is_monotone(ab_tally, protocol):
    tight = DecoyEstimator(ab_tally, protocol, 1e-6)
    loose = DecoyEstimator(ab_tally, protocol, 1e-14)
    s_t, s_l = tight.s11_lower(), loose.s11_lower()
    assert s_l <= s_t
    assert loose.e11_upper(s_l) >= tight.e11_upper(s_t) - 1e-12
