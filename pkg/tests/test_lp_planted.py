import numpy as np
import pytest

from mdiqn.finitekey import (
    InfeasibleError,
    estimate_e11ph_upper,
    estimate_s11_lower,
    finite_key_pipeline,
    key_rate,
)
from mdiqn.model import IntensityProtocol, default_protocol

from planted import K, planted_tally, random_model, random_protocol


def run_plants(count, seed):
    rng = np.random.default_rng(seed)
    results = []
    for _ in range(count):
        protocol = random_protocol(rng)
        Y, e = random_model(rng)
        tally = planted_tally(protocol, Y, e)
        try:
            s11 = estimate_s11_lower(tally, protocol)
            e11 = estimate_e11ph_upper(tally, protocol)
        except InfeasibleError:
            results.append(None)
            continue
        results.append((s11, Y[1, 1], e11, e[1, 1]))
    return results


def test_planted_soundness_random_models():
    results = run_plants(50, seed=2024)
    feasible = [r for r in results if r is not None]
    assert len(feasible) >= 45
    for s11, y11, e11, true_e11 in feasible:
        assert s11 <= y11
        assert e11 >= true_e11


def _detector_like_model(y11):
    # yields rising with photon number on both sides, tiny vacuum yields
    n = np.arange(K)
    Y = np.minimum(1.0, y11 * np.outer(n, n) ** 0.8) + 1e-7
    Y[1, 1] = y11
    return Y, np.full((K, K), 0.5)


def test_zero_width_plant_bounded_by_truth():
    protocol = default_protocol()
    Y, e = _detector_like_model(1e-3)
    tally = planted_tally(protocol, Y, e, n_pulses=1e18)
    s11 = estimate_s11_lower(tally, protocol, epsilon=None)
    assert 0 < s11 <= 1e-3 * (1 + 1e-6)


def test_uniform_error_plant():
    rng = np.random.default_rng(8)
    protocol = default_protocol()
    Y, e = random_model(rng)
    e[1:, 1:] = 0.25
    tally = planted_tally(protocol, Y, e, n_pulses=1e18)
    assert estimate_e11ph_upper(tally, protocol, epsilon=None) >= 0.25 * (1 - 1e-6)


def test_error_free_plant():
    rng = np.random.default_rng(9)
    protocol = default_protocol()
    Y, e = random_model(rng)
    e[:, :] = 0.0
    Y[0, :] = 0.0
    Y[:, 0] = 0.0
    tally = planted_tally(protocol, Y, e, n_pulses=1e18)
    s11 = estimate_s11_lower(tally, protocol, epsilon=None)
    assert estimate_e11ph_upper(tally, protocol, epsilon=None, s11_lower=s11) == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_pipeline_rate_never_exceeds_true_rate(seed):
    rng = np.random.default_rng(100 + seed)
    protocol = random_protocol(rng)
    Y, e = random_model(rng)
    tally = planted_tally(protocol, Y, e)
    zz = tally["z", "z"]
    try:
        rep = finite_key_pipeline(tally, protocol)
    except InfeasibleError:
        pytest.skip("plant excluded by its own statistics")
    true = key_rate(Y[1, 1], e[1, 1], zz.gain, zz.qber, protocol.mu("z"), protocol.p("z"))
    assert rep.rate_per_pulse <= true.rate_per_pulse
