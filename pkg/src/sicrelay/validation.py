"""Self-consistency checks that tie the closed forms to independent oracles.

Each check returns a :class:`CheckResult` holding the measured deviation and
the tolerance it was judged against. The Monte Carlo oracle for the per-relay
outcome probabilities draws exponentials from numpy's PCG64 generator, not from
the package's own counter-based stream, so the two sides share no code beyond
the decoding rule itself.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional

import numpy as np

from . import analytic
from .config import RateConfig
from .destination import SecondHopModel, gamma_d, post_mmse_sinr
from .preselect import select
from .protocol import DecodeEvent, Source, decode_codes

EVENT_GRID_GAMMA_DB = (0.0, 10.0, 20.0, 30.0, 40.0)
EVENT_GRID_LAM = (0.1, 0.5, 1.0, 2.0, 10.0)
EVENT_GRID_RATES = ((1.0, 1.0), (1.0, 2.0), (2.0, 2.0))
GRID_SLOTS = 3
SIGMA_LIMIT = 3.0
DEFAULT_TRIALS = {"small": 200_000, "full": 1_000_000}
VALIDATION_SEED = 20240611


@dataclass(frozen=True)
class CheckResult:
    check_name: str
    status: str
    measured: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return asdict(self)


def _result(name: str, measured: float, tolerance: float) -> CheckResult:
    ok = bool(np.isfinite(measured)) and measured <= tolerance
    return CheckResult(name, "pass" if ok else "fail", float(measured), float(tolerance))


def event_grid(grid: str = "full"):
    """(gamma_db, lam, mu, R1, R2) tuples; ``small`` keeps a corner subset."""
    if grid not in ("small", "full"):
        raise ValueError(f"grid must be 'small' or 'full', got {grid!r}")
    gammas, lams, rates = EVENT_GRID_GAMMA_DB, EVENT_GRID_LAM, EVENT_GRID_RATES
    if grid == "small":
        gammas, lams, rates = (0.0, 20.0, 40.0), (0.1, 1.0, 10.0), ((1.0, 1.0), (2.0, 2.0))
    return [(g, l, 1.0, r1, r2) for g in gammas for l in lams for r1, r2 in rates]


def event_z_scores(lam, mu, rates: RateConfig, gamma, trials, rng, probs_fn=None, chunk=1 << 21):
    """Standardized gaps between decoded-outcome frequencies and the closed forms.

    The standard error uses the closed-form probability itself (the null
    hypothesis), so an outcome that never occurs still yields a finite score.
    Returns ``(z, freqs, probs)`` indexed by outcome code.
    """
    probs_fn = probs_fn or analytic.event_probs
    counts = np.zeros(4, dtype=np.int64)
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        Y = rng.exponential(1.0 / mu, n)
        X = rng.exponential(1.0 / lam, n)
        counts += np.bincount(decode_codes(Y, X, gamma, rates), minlength=4)
        done += n
    p = probs_fn(lam, mu, rates, gamma).by_event()
    freqs = counts / trials
    se = np.sqrt(np.clip(p * (1 - p), 0.0, None) / trials)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(freqs - p) / np.where(se > 0, se, 1.0),
                     np.where(counts == np.round(p * trials), 0.0, np.inf))
    return z, freqs, p


def check_event_frequencies(grid="small", trials=None, seed=VALIDATION_SEED, probs_fn=None) -> CheckResult:
    """Worst z-score over the grid; the tolerance is 3 standard errors at ``trials`` draws."""
    trials = int(trials or DEFAULT_TRIALS[grid])
    worst = 0.0
    for i, (g_db, lam, mu, r1, r2) in enumerate(event_grid(grid)):
        rng = np.random.default_rng([seed, i])
        rates = RateConfig(r1, r2, GRID_SLOTS)
        z, _, _ = event_z_scores(lam, mu, rates, 10 ** (g_db / 10), trials, rng, probs_fn)
        worst = max(worst, float(z.max()))
    return _result(f"closed_form_vs_mc[{grid},n={trials}]", worst, SIGMA_LIMIT)


def _random_tuples(rng, n):
    lam = 10 ** rng.uniform(-2, 2, n)
    mu = 10 ** rng.uniform(-2, 2, n)
    k1 = 10 ** rng.uniform(-1.5, 1.5, n)
    k2 = 10 ** rng.uniform(-1.5, 1.5, n)
    gamma = 10 ** rng.uniform(-2, 6, n)
    return lam, mu, k1, k2, gamma


def check_sum_to_one(n=10_000, seed=VALIDATION_SEED, probs_fn=None) -> CheckResult:
    probs_fn = probs_fn or analytic.event_probs
    rng = np.random.default_rng([seed, 1])
    worst = 0.0
    for lam, mu, k1, k2, gamma in zip(*_random_tuples(rng, n)):
        p = probs_fn(lam, mu, RateConfig.from_thresholds(k1, k2), gamma)
        worst = max(worst, abs(p.total() - 1.0))
    return _result("sum_to_one", worst, 1e-12)


def check_high_snr(n=100, seed=VALIDATION_SEED, gamma=1e9, probs_fn=None) -> CheckResult:
    """Closed forms at large gamma against the limiting constants.

    The finite-gamma gap shrinks like ``(lam + mu k) k / gamma``, so tuples are
    drawn from the operating range of the event grid: lam, mu in [0.1, 10] and
    rates in [0.5, 2] bits with three slots.
    """
    probs_fn = probs_fn or analytic.event_probs
    rng = np.random.default_rng([seed, 2])
    worst = 0.0
    lams, mus = 10 ** rng.uniform(-1, 1, (2, n))
    r1s, r2s = rng.uniform(0.5, 2.0, (2, n))
    for lam, mu, r1, r2 in zip(lams, mus, r1s, r2s):
        rates = RateConfig(r1, r2, GRID_SLOTS)
        c, c_prime = analytic.high_snr_constants(lam, mu, rates)
        p = probs_fn(lam, mu, rates, gamma).by_event()
        target = np.zeros(4)
        target[DecodeEvent.NONE] = c
        target[DecodeEvent.BOTH] = c_prime
        worst = max(worst, float(np.max(np.abs(p - target))))
    return _result("high_snr_constants", worst, 1e-6)


def check_limits(probs_fn=None) -> CheckResult:
    """Largest deviation from the stated large-lambda and large-gamma limits."""
    probs_fn = probs_fn or analytic.event_probs
    devs = []
    for (r1, r2), g_db in itertools.product(EVENT_GRID_RATES, (0.0, 10.0, 20.0)):
        rates = RateConfig(r1, r2, GRID_SLOTS)
        gamma = 10 ** (g_db / 10)
        k1, k2 = rates.k1, rates.k2
        lam = 1e8
        p = probs_fn(lam, 1.0, rates, gamma)
        devs.append(abs(p.p_both_fail - (-math.expm1(-k1 / gamma))))
        devs.append(p.p_s1fail_s2ok)
        devs.append(abs(p.p_s1ok_s2fail - math.exp(-k1 / gamma) * -math.expm1(-lam * k2 / gamma)))
    for lam, mu in ((0.1, 1.0), (1.0, 1.0), (10.0, 0.5)):
        for r1, r2 in EVENT_GRID_RATES:
            p = probs_fn(lam, mu, RateConfig(r1, r2, GRID_SLOTS), 1e9)
            devs.extend([p.p_s1ok_s2fail, p.p_s1fail_s2ok])
    return _result("limiting_cases", max(devs), 1e-6)


def _random_single_column_model(rng, n_relays, sigma2):
    col = (rng.standard_normal(n_relays) + 1j * rng.standard_normal(n_relays)) * rng.uniform(0.1, 3)
    H = np.stack([col, np.zeros(n_relays, dtype=complex)], axis=1)
    noise = sigma2 * (1 + rng.exponential(2.0, n_relays) * rng.integers(0, 2, n_relays))
    return SecondHopModel(H=H, noise_cov_diag=noise)


def check_mmse_identity(n=1000, seed=VALIDATION_SEED) -> CheckResult:
    """Post-MMSE SINR against the closed-form combining SNR on random single-column models."""
    rng = np.random.default_rng([seed, 3])
    worst = 0.0
    for _ in range(n):
        model = _random_single_column_model(rng, int(rng.integers(1, 9)), 10 ** rng.uniform(-3, 1))
        ref = gamma_d(model, Source.S1)
        worst = max(worst, abs(post_mmse_sinr(model, Source.S1) - ref) / max(ref, 1e-300))
    return _result("mmse_sinr_identity", worst, 1e-9)


def brute_force_best(weights, n_used) -> tuple:
    best, best_val = None, -np.inf
    for subset in itertools.combinations(range(len(weights)), n_used):
        val = float(np.sum(np.asarray(weights)[list(subset)]))
        if val > best_val:
            best, best_val = subset, val
    return best


def check_selection(n=200, max_relays=10, seed=VALIDATION_SEED) -> CheckResult:
    """Number of (weights, N_RU) cases where greedy selection loses to exhaustive search."""
    rng = np.random.default_rng([seed, 4])
    misses = 0
    for _ in range(n):
        n_relays = int(rng.integers(1, max_relays + 1))
        w = rng.exponential(1.0, n_relays)
        for k in range(1, n_relays + 1):
            chosen = select(w, k)
            best = brute_force_best(w, k)
            if not math.isclose(chosen.objective, float(w[list(best)].sum()), rel_tol=1e-12):
                misses += 1
    return _result("select_vs_bruteforce", misses, 0)


def run_validation(grid: str = "small", trials: Optional[int] = None,
                   probs_fn: Optional[Callable] = None) -> List[CheckResult]:
    """Run every check. ``probs_fn`` replaces the closed-form outcome probabilities."""
    small = grid == "small"
    return [
        check_sum_to_one(n=2000 if small else 10_000, probs_fn=probs_fn),
        check_event_frequencies(grid, trials, probs_fn=probs_fn),
        check_limits(probs_fn=probs_fn),
        check_high_snr(probs_fn=probs_fn),
        check_mmse_identity(n=200 if small else 1000),
        check_selection(n=50 if small else 200),
    ]
