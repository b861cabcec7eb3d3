"""Outage estimates and their confidence intervals."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

Z95 = 1.959963984540054


def wilson_interval(failures: int, trials: int, z: float = Z95):
    """Wilson score interval (low, high) for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = failures / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class OutageEstimate:
    """Outage probability estimate.

    Binomial estimates carry ``failures`` and a Wilson interval. Weighted
    estimates from the event-enumeration path have ``failures=None`` and a
    normal-approximation interval.
    """

    p_hat: float
    trials: int
    ci_half_width: float
    failures: Optional[int] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    skipped_mass: float = 0.0

    @classmethod
    def from_counts(cls, failures: int, trials: int) -> "OutageEstimate":
        lo, hi = wilson_interval(failures, trials)
        return cls(p_hat=failures / trials, trials=trials, ci_half_width=(hi - lo) / 2,
                   failures=failures, ci_low=lo, ci_high=hi)

    @classmethod
    def from_mean(cls, p_hat: float, std_error: float, trials: int, skipped_mass: float = 0.0):
        half = Z95 * std_error
        p = min(1.0, max(0.0, p_hat))
        return cls(p_hat=p, trials=trials, ci_half_width=half, ci_low=max(0.0, p - half),
                   ci_high=min(1.0, p + half + skipped_mass), skipped_mass=skipped_mass)

    @property
    def interval(self):
        if self.ci_low is not None:
            return self.ci_low, self.ci_high
        return max(0.0, self.p_hat - self.ci_half_width), min(1.0, self.p_hat + self.ci_half_width)

    @property
    def reliable(self) -> bool:
        """False for binomial estimates resting on fewer than 20 failures."""
        return self.failures is None or self.failures >= 20

    def overlaps(self, other: "OutageEstimate") -> bool:
        lo1, hi1 = self.interval
        lo2, hi2 = other.interval
        return lo1 <= hi2 and lo2 <= hi1
