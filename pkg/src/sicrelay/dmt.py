"""Diversity-multiplexing tradeoff and empirical diversity slopes."""
from __future__ import annotations

from typing import Iterable, Tuple

import numpy as np


def max_multiplexing_gain(n_slots: int) -> float:
    return 2.0 / n_slots


def diversity(r1: float, n_relays: int, n_slots: int) -> float:
    """Diversity gain of S1 at multiplexing gain ``r1``; it does not depend on S2's gain."""
    r_max = max_multiplexing_gain(n_slots)
    if not 0.0 <= r1 <= r_max * (1 + 1e-12):
        raise ValueError(f"r1 must lie in [0, {r_max}], got {r1}")
    return max(0.0, n_relays - 0.5 * n_relays * n_slots * r1)


def empirical_slope(curve: Iterable[Tuple[float, float]], window: Tuple[float, float],
                    max_pout: float = 0.1, min_points: int = 4) -> float:
    """Least-squares slope of -log Pout against log gamma.

    ``curve`` holds (linear gamma, Pout) pairs; ``window`` is an SNR range in dB.
    Only points inside the window with 0 < Pout < ``max_pout`` are used.
    """
    pts = np.array([(g, p) for g, p in curve], dtype=float).reshape(-1, 2)
    lo, hi = sorted(window)
    db = 10 * np.log10(pts[:, 0])
    tol = 1e-9
    use = (db >= lo - tol) & (db <= hi + tol) & (pts[:, 1] > 0) & (pts[:, 1] < max_pout)
    if np.count_nonzero(use) < min_points:
        raise ValueError(f"need at least {min_points} usable points in [{lo}, {hi}] dB, "
                         f"got {int(np.count_nonzero(use))}")
    slope, _ = np.polyfit(np.log(pts[use, 0]), -np.log(pts[use, 1]), 1)
    return float(slope)
