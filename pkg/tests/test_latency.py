import math
import random

import numpy as np
import pytest
from scipy import optimize, stats

from cvcloudsim.latency import (DIURNAL_PROFILES, Z_P95, CalibrationError,
                                LatencyModel, bucket_of, calibrate, round_half_up)

TABLE_TARGETS = [(85.0, 136.0), (84.0, 139.0), (41.0, 74.0)]


def _oracle_calibrate(mean, p95):
    # Independent root-find of sigma^2/2 - z*sigma + ln(p95/mean) = 0 on [0, z].
    ratio = math.log(p95 / mean)
    if ratio == 0.0:
        return math.log(mean), 0.0
    sigma = optimize.brentq(lambda s: s * s / 2 - Z_P95 * s + ratio, 0.0, Z_P95)
    return math.log(mean) - sigma * sigma / 2, sigma


@pytest.mark.parametrize("mean,p95", TABLE_TARGETS)
def test_calibrate_matches_independent_root_find(mean, p95):
    mu, sigma = calibrate(mean, p95)
    mu_ref, sigma_ref = _oracle_calibrate(mean, p95)
    assert mu == pytest.approx(mu_ref, abs=1e-10)
    assert sigma == pytest.approx(sigma_ref, abs=1e-10)


@pytest.mark.parametrize("mean,p95", TABLE_TARGETS + [(7.0, 7.5), (500.0, 501.0)])
def test_calibrate_round_trip_is_exact(mean, p95):
    model = LatencyModel.from_targets("x", mean, p95)
    assert abs(model.analytic_mean() - mean) / mean < 1e-9
    assert abs(model.analytic_p95() - p95) / p95 < 1e-9


def test_calibrate_frozen_values():
    # Frozen from the root-find oracle (brentq to 1e-12).
    mu, sigma = calibrate(85, 136)
    assert mu == pytest.approx(4.392685, abs=5e-6)
    assert sigma == pytest.approx(0.316120, abs=5e-6)
    mu, sigma = calibrate(41, 74)
    assert mu == pytest.approx(3.629471, abs=5e-6)
    assert sigma == pytest.approx(0.410125, abs=5e-6)


def test_calibrate_degenerate_equal_targets():
    mu, sigma = calibrate(100, 100)
    assert sigma == 0.0
    assert mu == math.log(100)


def test_calibrate_rejects_bad_targets():
    with pytest.raises(CalibrationError):
        calibrate(100, 50)  # p95 below mean
    with pytest.raises(CalibrationError):
        calibrate(0, 10)
    with pytest.raises(CalibrationError):
        calibrate(-5, 10)
    with pytest.raises(CalibrationError):
        calibrate(10, 400)  # ratio above exp(z^2/2) ~ 3.87


def test_sample_degenerate_is_constant():
    model = LatencyModel("up", math.log(85), 0.0)
    rng = random.Random(1)
    assert [model.sample(t, rng) for t in range(10)] == [85] * 10


def test_sample_minimum_one_ms():
    model = LatencyModel("tiny", math.log(0.01), 0.0)
    assert model.sample(0, random.Random(1)) == 1


def test_round_half_up():
    assert round_half_up(2.5) == 3
    assert round_half_up(2.4999) == 2
    assert round_half_up(84.5) == 85


def test_sample_monte_carlo_mean_and_p95():
    model = LatencyModel.from_targets("up", 85, 136)
    rng = random.Random(123)
    n = 200_000
    draws = sorted(model.sample(0, rng) for _ in range(n))
    mean = sum(draws) / n
    p95 = draws[math.ceil(0.95 * n) - 1]
    assert abs(mean - 85) / 85 < 0.01
    assert abs(p95 - 136) / 136 < 0.02


def test_diurnal_multiplier_scales_mean():
    flat = LatencyModel.from_targets("up", 85, 136)
    doubled = LatencyModel("up", flat.mu, flat.sigma, (2.0,) + (1.0,) * 7)
    rng_a, rng_b = random.Random(5), random.Random(5)
    n = 20_000
    mean_flat = sum(flat.sample(0, rng_a) for _ in range(n)) / n
    mean_doubled = sum(doubled.sample(0, rng_b) for _ in range(n)) / n
    assert abs(mean_doubled - 2 * mean_flat) / (2 * mean_flat) < 0.02


def test_diurnal_monotone_per_draw_with_shared_stream():
    base = LatencyModel.from_targets("up", 85, 136)
    hi = LatencyModel("up", base.mu, base.sigma, (1.15,) * 8)
    lo = LatencyModel("up", base.mu, base.sigma, (0.95,) * 8)
    rng_hi, rng_lo = random.Random(9), random.Random(9)
    for _ in range(2000):
        assert hi.sample(0, rng_hi) >= lo.sample(0, rng_lo)


def test_samples_strictly_positive():
    model = LatencyModel.from_targets("down", 84, 139)
    rng = random.Random(3)
    assert all(model.sample(t, rng) >= 1 for t in range(5000))


def test_bucket_of():
    hour = 3_600_000
    assert bucket_of(0) == 0
    assert bucket_of(int(13.5 * hour)) == 4
    assert bucket_of(24 * hour) == 0
    assert bucket_of(25 * hour) == 0
    # scenario starting at 22:00: two hours later wraps into bucket 0
    assert bucket_of(0, start_offset_ms=22 * hour) == 7
    assert bucket_of(2 * hour, start_offset_ms=22 * hour) == 0


def test_sample_uses_bucket_of_emission_time():
    base = LatencyModel.from_targets("up", 85, 136)
    diurnal = tuple(2.0 if b == 4 else 1.0 for b in range(8))
    model = LatencyModel("up", base.mu, base.sigma, diurnal)
    rng_peak, rng_flat = random.Random(2), random.Random(2)
    at_peak = 13 * 3_600_000  # bucket 4
    n = 5000
    peak = sum(model.sample(at_peak, rng_peak) for _ in range(n)) / n
    flat = sum(model.sample(0, rng_flat) for _ in range(n)) / n
    assert peak > 1.8 * flat


def test_kolmogorov_smirnov_distance():
    model = LatencyModel.from_targets("up", 85, 136)
    rng = random.Random(77)
    draws = np.array([model.raw(rng) for _ in range(100_000)])
    statistic, _ = stats.kstest(draws, "lognorm", args=(model.sigma, 0, math.exp(model.mu)))
    assert statistic < 0.01


def test_profiles_shape():
    for profile in DIURNAL_PROFILES.values():
        assert set(profile) == {"upload", "download", "process"}
        for multipliers in profile.values():
            assert len(multipliers) == 8
            assert all(m > 0 for m in multipliers)
    peaks = DIURNAL_PROFILES["daily-peaks"]
    assert peaks["upload"][4] > peaks["upload"][0]
    assert {b for b, m in enumerate(peaks["download"]) if m > 1} == {1, 2, 4, 6}


def test_model_validation():
    with pytest.raises(CalibrationError):
        LatencyModel("x", 1.0, -0.1)
    with pytest.raises(CalibrationError):
        LatencyModel("x", 1.0, 0.1, (1.0,) * 7)
    with pytest.raises(CalibrationError):
        LatencyModel("x", 1.0, 0.1, (1.0,) * 7 + (0.0,))
