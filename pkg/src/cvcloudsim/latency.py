"""Calibrated stochastic delay models.

Upload, download, and processing delays are drawn from log-normal
distributions fitted so the analytic mean and 95th percentile hit measured
targets exactly, then scaled by a time-of-day multiplier over eight 3-hour
buckets.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .engine import SimTime

Z_P95 = 1.64485  # standard-normal 95% quantile used by the closed-form fit
BUCKET_MS = 3 * 3600 * 1000
DAY_MS = 24 * 3600 * 1000
FLAT_DIURNAL = (1.0,) * 8


class CalibrationError(ValueError):
    """Raised when (mean, p95) targets cannot be met by any log-normal."""


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def bucket_of(at: SimTime, start_offset_ms: int = 0) -> int:
    """3-hour bucket index (0..7) of the local time-of-day, wrapping daily."""
    return ((start_offset_ms + at) % DAY_MS) // BUCKET_MS


def calibrate(target_mean_ms: float, target_p95_ms: float) -> tuple[float, float]:
    """Fit (mu, sigma) so the log-normal mean and p95 equal the targets.

    Solves sigma^2/2 - z*sigma + ln(p95/mean) = 0 for the smaller root, then
    mu = ln(mean) - sigma^2/2. Requires p95 >= mean > 0 and a ratio no larger
    than exp(z^2/2); outside that range no real root exists.
    """
    if target_mean_ms <= 0 or target_p95_ms <= 0:
        raise CalibrationError(
            f"targets must be positive, got ({target_mean_ms}, {target_p95_ms})")
    if target_p95_ms < target_mean_ms:
        raise CalibrationError(
            f"p95 target {target_p95_ms} is below the mean target {target_mean_ms}")
    ratio = math.log(target_p95_ms / target_mean_ms)
    discriminant = Z_P95 * Z_P95 - 2.0 * ratio
    if discriminant < 0:
        raise CalibrationError(
            f"targets ({target_mean_ms}, {target_p95_ms}) exceed the feasible "
            f"p95/mean ratio {math.exp(Z_P95 * Z_P95 / 2):.4f}")
    sigma = Z_P95 - math.sqrt(discriminant)
    mu = math.log(target_mean_ms) - sigma * sigma / 2.0
    return mu, sigma


@dataclass(frozen=True)
class LatencyModel:
    """Log-normal delay generator with per-bucket diurnal multipliers."""

    label: str
    mu: float
    sigma: float
    diurnal: tuple[float, ...] = FLAT_DIURNAL

    def __post_init__(self):
        if self.sigma < 0:
            raise CalibrationError(f"{self.label}: sigma must be >= 0")
        if len(self.diurnal) != 8 or any(m <= 0 for m in self.diurnal):
            raise CalibrationError(
                f"{self.label}: diurnal profile needs 8 positive multipliers")

    @classmethod
    def from_targets(cls, label: str, mean_ms: float, p95_ms: float,
                     diurnal: tuple[float, ...] = FLAT_DIURNAL) -> "LatencyModel":
        mu, sigma = calibrate(mean_ms, p95_ms)
        return cls(label, mu, sigma, tuple(diurnal))

    def analytic_mean(self) -> float:
        return math.exp(self.mu + self.sigma * self.sigma / 2.0)

    def analytic_p95(self) -> float:
        return math.exp(self.mu + Z_P95 * self.sigma)

    def raw(self, rng: random.Random) -> float:
        """One un-rounded draw before any diurnal scaling."""
        if self.sigma == 0.0:
            return math.exp(self.mu)
        return rng.lognormvariate(self.mu, self.sigma)

    def sample(self, at: SimTime, rng: random.Random,
               start_offset_ms: int = 0) -> int:
        """Delay in whole ms at simulation time `at` (min 1, half-up rounding)."""
        scaled = self.raw(rng) * self.diurnal[bucket_of(at, start_offset_ms)]
        return max(1, round_half_up(scaled))


def _peaks(peak_buckets: set[int], peak: float = 1.15, off: float = 0.95) -> tuple[float, ...]:
    return tuple(peak if b in peak_buckets else off for b in range(8))


# Named multiplier profiles per direction. "daily-peaks" marks the observed
# busy windows: uploads peak 12:00-15:00; downloads 03:00-09:00, 12:00-15:00,
# and 18:00-21:00. Values are configuration defaults, not measurements.
DIURNAL_PROFILES: dict[str, dict[str, tuple[float, ...]]] = {
    "flat": {
        "upload": FLAT_DIURNAL,
        "download": FLAT_DIURNAL,
        "process": FLAT_DIURNAL,
    },
    "daily-peaks": {
        "upload": _peaks({4}),
        "download": _peaks({1, 2, 4, 6}),
        "process": FLAT_DIURNAL,
    },
}
