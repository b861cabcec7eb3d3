"""Full-system Monte Carlo: channel draws, relay SIC, second hop, destination outage.

Trial ``t`` always uses stream ``t`` of the channel key, so the outcome of a run
does not depend on how trials are split into chunks or across workers. Only
integer counters are reduced.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .analytic import MAX_ENUMERATED_RELAYS, end_to_end_outage
from .config import ScenarioConfig, db_to_linear
from .destination import gamma_d_arrays
from .fading import draw_gains
from .protocol import Source, first_hop_arrays
from .rng import SeedSpec
from .stats import OutageEstimate

log = logging.getLogger(__name__)

CHUNK_TRIALS = 1 << 16


@dataclass(frozen=True)
class Tally:
    failures_s1: int
    failures_s2: int
    event_counts: np.ndarray  # (n_active, 4)

    def __add__(self, other: "Tally") -> "Tally":
        return Tally(self.failures_s1 + other.failures_s1, self.failures_s2 + other.failures_s2,
                     self.event_counts + other.event_counts)


@dataclass(frozen=True)
class SimulationResult:
    s1: OutageEstimate
    s2: OutageEstimate
    event_counts: np.ndarray
    trials: int

    def estimate(self, source: Source) -> OutageEstimate:
        return self.s1 if Source(source) == Source.S1 else self.s2

    @property
    def event_freqs(self) -> np.ndarray:
        return self.event_counts / self.trials


def simulate_chunk(config: ScenarioConfig, gamma: float, start: int, stop: int) -> Tally:
    trials = np.arange(start, stop, dtype=np.uint64)
    rates = config.rates
    h, f = draw_gains(config, trials)
    codes, a1, a2, a3, g = first_hop_arrays(h, gamma, rates, config.p_relay)
    snr1 = gamma_d_arrays(g, f, a1, a3, gamma)
    snr2 = gamma_d_arrays(g, f, a2, a3, gamma)
    counts = np.stack([np.bincount(codes[:, r], minlength=4) for r in range(codes.shape[1])])
    return Tally(int(np.count_nonzero(snr1 < rates.k1)), int(np.count_nonzero(snr2 < rates.k2)),
                 counts.astype(np.int64))


def _chunk_job(args):
    return simulate_chunk(*args)


def _chunks(trials: int):
    return [(s, min(s + CHUNK_TRIALS, trials)) for s in range(0, trials, CHUNK_TRIALS)]


def simulate(config: ScenarioConfig, gamma: float, trials: Optional[int] = None,
             workers: int = 1) -> SimulationResult:
    """Run ``trials`` full-system trials at linear SNR ``gamma`` for both sources."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    trials = int(trials or config.trials)
    jobs = [(config, gamma, a, b) for a, b in _chunks(trials)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            tallies = list(pool.map(_chunk_job, jobs))
    else:
        tallies = [simulate_chunk(*j) for j in jobs]
    total = tallies[0]
    for t in tallies[1:]:
        total = total + t
    s1 = OutageEstimate.from_counts(total.failures_s1, trials)
    s2 = OutageEstimate.from_counts(total.failures_s2, trials)
    for name, est in (("S1", s1), ("S2", s2)):
        if not est.reliable:
            log.warning("%s outage at gamma=%.4g rests on %d failures; estimate unreliable",
                        name, gamma, est.failures)
    return SimulationResult(s1, s2, total.event_counts, trials)


def estimate_outage(config: ScenarioConfig, gamma: float, source: Source = Source.S1,
                    trials: Optional[int] = None, workers: int = 1) -> OutageEstimate:
    return simulate(config, gamma, trials, workers).estimate(source)


@dataclass(frozen=True)
class SweepRow:
    gamma_db: float
    sim_s1: OutageEstimate
    sim_s2: OutageEstimate
    analytic_s1: Optional[OutageEstimate]


def sweep(config: ScenarioConfig, gammas_db: Sequence[float], workers: int = 1,
          analytic: bool = True, trials: Optional[int] = None) -> List[SweepRow]:
    """One row per SNR point, in grid order; the analytic column needs at most 8 active relays."""
    if len(gammas_db) == 0:
        raise ValueError("empty SNR grid")
    with_analytic = analytic and len(config.active) <= MAX_ENUMERATED_RELAYS
    rows = []
    for db in gammas_db:
        gamma = float(db_to_linear(db))
        res = simulate(config, gamma, trials, workers)
        an = end_to_end_outage(config, gamma, seed=SeedSpec(config.master_seed)) if with_analytic else None
        rows.append(SweepRow(float(db), res.s1, res.s2, an))
    return rows
