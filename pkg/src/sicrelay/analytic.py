"""Closed-form relay decoding probabilities and the event-enumeration outage model.

With ``Y = |h_{1,r}|^2 ~ Exp(mu)`` and ``X = |h_{2,r}|^2 ~ Exp(lam)`` the four
SIC outcomes at a relay partition the (X, Y) quadrant into polygons whose
probabilities have closed forms. The end-to-end outage sums, over all 4**N
outcome vectors, the product of per-relay outcome probabilities times the
second-hop outage conditioned on that vector. The second-hop factor has no
closed form and is estimated by sampling the first-hop gains inside the outcome
regions.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import RateConfig, ScenarioConfig
from .protocol import DecodeEvent, Source, decode_codes
from .rng import SeedSpec, derive_key, fold, uniforms
from .stats import OutageEstimate

MAX_ENUMERATED_RELAYS = 8
MIN_ACCEPTANCE = 1e-6
ANALYTIC_TAG = 0x414E41
_CHUNK_ELEMENTS = 1 << 21
_DRAWS_PER_RELAY = 8

SAMPLERS = ("importance", "rejection", "unconditional")


class RareEventError(RuntimeError):
    """Rejection sampling cannot reach an outcome region at the requested parameters."""


@dataclass(frozen=True)
class RelayEventProbs:
    p_both_fail: float
    p_s1fail_s2ok: float
    p_s1ok_s2fail: float
    p_both_ok: float

    def total(self) -> float:
        return self.p_both_fail + self.p_s1fail_s2ok + self.p_s1ok_s2fail + self.p_both_ok

    def by_event(self) -> np.ndarray:
        """Probabilities indexed by :class:`DecodeEvent` code."""
        out = np.empty(4)
        out[DecodeEvent.NONE] = self.p_both_fail
        out[DecodeEvent.ONLY_S1] = self.p_s1ok_s2fail
        out[DecodeEvent.ONLY_S2] = self.p_s1fail_s2ok
        out[DecodeEvent.BOTH] = self.p_both_ok
        return out

    def __getitem__(self, event) -> float:
        return float(self.by_event()[int(event)])


def _check_positive(**values):
    for name, v in values.items():
        if not (np.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class _Regions:
    """Masses of the six polygons that make up the four outcomes.

    Suffix ``a`` means S1 is decoded first, ``b`` means S2 is.
    """

    lam: float
    mu: float
    k1: float
    k2: float
    gamma: float
    none_a: float
    none_b: float
    only_s1: float
    only_s2: float
    both_a: float
    both_b: float
    # correction terms for thresholds below one, zero otherwise
    trunc_a: float
    trunc_b: float
    # the two parts of the printed both-decoded expression
    stay_a: float
    stay_b: float


def _regions(lam, mu, k1, k2, gamma) -> _Regions:
    c = k1 / k2
    t1, t2 = k1 / gamma, k2 / gamma
    p1 = lam / (lam + mu * c)  # Pr{S1 decoded first}
    p2 = mu / (mu + lam / c)
    a0 = lam / (lam + mu * k1)
    b0 = mu / (mu + lam * k2)
    A = a0 * math.exp(-mu * t1)
    B = b0 * math.exp(-lam * t2)
    # p1 - A written without cancellation: (p1 - a0) + a0 (1 - e^{-mu t1})
    none_a = lam * mu * (k1 - c) / ((lam + mu * c) * (lam + mu * k1)) - a0 * math.expm1(-mu * t1)
    none_b = mu * lam * (k2 - 1 / c) / ((mu + lam / c) * (mu + lam * k2)) - b0 * math.expm1(-lam * t2)
    # With k2 < 1 the S1-first failure strip closes at x = t1 / (c - k1)
    trunc_a = 0.0
    if c > k1:
        xa = t1 / (c - k1)
        trunc_a = p1 * math.exp(-(lam + mu * c) * xa) - A * math.exp(-(lam + mu * k1) * xa)
    trunc_b = 0.0
    if 1 / c > k2:
        yb = t2 / (1 / c - k2)
        trunc_b = p2 * math.exp(-(mu + lam / c) * yb) - B * math.exp(-(mu + lam * k2) * yb)
    none_a -= trunc_a
    none_b -= trunc_b
    only_s1 = -A * math.expm1(-(lam + mu * k1) * t2)
    only_s2 = -B * math.expm1(-(mu + lam * k2) * t1)
    stay_a = A * math.exp(-(lam + mu * k1) * t2)
    stay_b = B * math.exp(-(mu + lam * k2) * t1)
    return _Regions(
        lam, mu, k1, k2, gamma,
        none_a=none_a, none_b=none_b, only_s1=only_s1, only_s2=only_s2,
        both_a=max(0.0, p1 - none_a - only_s1), both_b=max(0.0, p2 - none_b - only_s2),
        trunc_a=trunc_a, trunc_b=trunc_b, stay_a=stay_a, stay_b=stay_b,
    )


def event_probs(lam: float, mu: float, rates: RateConfig, gamma: float) -> RelayEventProbs:
    """Probabilities of the four SIC outcomes at one relay.

    ``lam`` and ``mu`` are the reciprocal mean powers of the S2 and S1 links.
    """
    _check_positive(lam=lam, mu=mu, gamma=gamma)
    k1, k2 = rates.k1, rates.k2
    reg = _regions(lam, mu, k1, k2, gamma)
    c = k1 / k2
    both_ok = (1.0 + reg.stay_a + reg.stay_b - lam / (lam + mu * c) - mu / (mu + lam / c)
               + reg.trunc_a + reg.trunc_b)
    return RelayEventProbs(
        p_both_fail=reg.none_a + reg.none_b,
        p_s1fail_s2ok=reg.only_s2,
        p_s1ok_s2fail=reg.only_s1,
        p_both_ok=both_ok,
    )


def high_snr_constants(lam: float, mu: float, rates: RateConfig):
    """Limits of the both-fail and both-decoded probabilities as the SNR grows.

    The two mixed outcomes vanish in the limit, so the constants sum to one.
    """
    _check_positive(lam=lam, mu=mu)
    k1, k2 = rates.k1, rates.k2
    pair_a = lam / (lam + mu * k1 / k2) - lam / (lam + mu * k1)
    pair_b = mu / (lam * k2 / k1 + mu) - mu / (mu + lam * k2)
    # a failure strip of zero width contributes nothing when its threshold is below one
    if k2 < 1:
        pair_a = 0.0
    if k1 < 1:
        pair_b = 0.0
    c_both_fail = pair_a + pair_b
    c_both_ok = (1.0 + lam / (lam + mu * k1) + mu / (mu + lam * k2)
                 - lam / (lam + mu * k1 / k2) - mu / (mu + lam * k2 / k1))
    if k2 < 1:
        c_both_ok += lam / (lam + mu * k1 / k2) - lam / (lam + mu * k1)
    if k1 < 1:
        c_both_ok += mu / (lam * k2 / k1 + mu) - mu / (mu + lam * k2)
    return c_both_fail, c_both_ok


# ---------------------------------------------------------------------------
# sampling inside an outcome region

def _truncated_exp(u, rate, lo, hi):
    """Inverse-CDF draw of Exp(rate) restricted to [lo, hi); also returns the interval mass."""
    span = np.asarray(hi - lo, dtype=float)
    frac = -np.expm1(-rate * span)  # 1 when hi is infinite
    x = lo - np.log1p(-u * frac) / rate
    mass = np.exp(-rate * lo) * frac
    return x, mass


def _pieces(reg: _Regions, code: int):
    """The polygons of one outcome as (mass, x_lo, x_hi, y_lo(x), y_hi(x)) with X outermost."""
    k1, k2, gamma = reg.k1, reg.k2, reg.gamma
    c = k1 / k2
    t1, t2 = k1 / gamma, k2 / gamma
    inf = math.inf
    if code == DecodeEvent.NONE:
        xa = t1 / (c - k1) if c > k1 else inf
        xb = t2 / (1 - k1) if k1 < 1 else inf
        return [
            (reg.none_a, 0.0, xa, lambda x: c * x, lambda x: k1 * x + t1),
            (reg.none_b, 0.0, xb, lambda x: np.maximum(0.0, (x - t2) / k2), lambda x: c * x),
        ]
    if code == DecodeEvent.ONLY_S1:
        return [(reg.only_s1, 0.0, t2, lambda x: k1 * x + t1, lambda x: np.full_like(x, inf))]
    if code == DecodeEvent.ONLY_S2:
        return [(reg.only_s2, t2, inf, lambda x: np.zeros_like(x),
                 lambda x: np.minimum(np.minimum(t1, c * x), (x - t2) / k2))]
    xd = max(t1 / c, t2 + k2 * t1)
    return [
        (reg.both_a, t2, inf, lambda x: np.maximum(c * x, k1 * x + t1), lambda x: np.full_like(x, inf)),
        (reg.both_b, xd, inf, lambda x: np.full_like(x, t1),
         lambda x: np.minimum(c * x, (x - t2) / k2)),
    ]


def sample_region(reg: _Regions, code: int, u_piece, u_x, u_y):
    """Draw (Y, X) inside the outcome region ``code`` with importance weights.

    X comes from its exponential law truncated to the polygon's X range and Y
    from its law truncated to the polygon's section at X. The returned weight
    has expectation equal to the outcome probability.
    """
    pieces = [p for p in _pieces(reg, code) if p[0] > 0]
    shape = np.shape(u_x)
    Y = np.zeros(shape)
    X = np.zeros(shape)
    W = np.zeros(shape)
    if not pieces:
        return Y, X, W
    masses = np.array([p[0] for p in pieces])
    probs = masses / masses.sum()
    which = np.searchsorted(np.cumsum(probs)[:-1], u_piece, side="right")
    for j, (_, x_lo, x_hi, y_lo, y_hi) in enumerate(pieces):
        sel = which == j
        if not np.any(sel):
            continue
        x, x_mass = _truncated_exp(u_x[sel], reg.lam, x_lo, x_hi)
        lo = y_lo(x)
        hi = y_hi(x)
        valid = hi > lo
        lo_v = np.where(valid, lo, 0.0)
        hi_v = np.where(valid, hi, 1.0)
        y, y_mass = _truncated_exp(u_y[sel], reg.mu, lo_v, hi_v)
        Y[sel] = np.where(valid, y, lo)
        X[sel] = x
        W[sel] = np.where(valid, x_mass * y_mass / probs[j], 0.0)
    return Y, X, W


# ---------------------------------------------------------------------------
# second hop

def _relay_terms(codes, Y, X, gamma, p_relay, source):
    """Per-relay ``u = g^2 |a_src|^2`` and ``v = g^2 |a3|^2`` from powers and outcome codes."""
    s1 = (codes & 1).astype(bool)
    s2 = (codes & 2).astype(bool)
    a1 = np.where(s1, 1.0, Y)
    a2 = np.where(s2, 1.0, X)
    a3 = np.where(s1 & s2, 0.0, 1.0)
    g2 = p_relay / (a1 + a2 + a3 / gamma)
    a_src = a1 if source == Source.S1 else a2
    return g2 * a_src, g2 * a3


def _snr_cdf(s, u, v, nu, gamma):
    """Pr{gamma u F / (v F + 1) < s} for F ~ Exp(nu), elementwise."""
    s = np.maximum(s, 0.0)
    room = gamma * u - v * s
    with np.errstate(divide="ignore", invalid="ignore"):
        f_max = np.where(room > 0, s / np.where(room > 0, room, 1.0), np.inf)
    return -np.expm1(-nu * f_max)


def _snr_of(F, u, v, gamma):
    return gamma * u * F / (v * F + 1.0)


def _second_hop_weighted(u, v, nu, gamma, k, u_f):
    """Outage probability of sum_r gamma u_r F_r/(v_r F_r + 1) < k, conditionally on (u, v).

    F for every relay but the first is drawn below its own largest admissible
    value (all terms are non-negative), and the first relay is integrated
    exactly. Arrays have relay as the last axis.
    """
    n = u.shape[-1]
    out = np.ones(u.shape[:-1])
    remaining = np.full(u.shape[:-1], float(k))
    for r in range(1, n):
        cap = _snr_cdf(k, u[..., r], v[..., r], nu[r], gamma)
        room = gamma * u[..., r] - v[..., r] * k
        with np.errstate(divide="ignore", invalid="ignore"):
            f_max = np.where(room > 0, k / np.where(room > 0, room, 1.0), np.inf)
        F, _ = _truncated_exp(u_f[..., r], nu[r], 0.0, f_max)
        out = out * cap
        remaining = remaining - _snr_of(F, u[..., r], v[..., r], gamma)
    first = np.where(remaining > 0, _snr_cdf(remaining, u[..., 0], v[..., 0], nu[0], gamma), 0.0)
    return out * first


def _source_threshold(rates: RateConfig, source: Source) -> float:
    return rates.k1 if Source(source) == Source.S1 else rates.k2


def _importance_batch(events, config, gamma, trials, key, source, regions):
    """Weighted conditional estimates for a block of event vectors.

    Returns (ratio estimate, standard error) arrays over the events.
    """
    events = np.asarray(events)
    n_ev, n = events.shape
    ev_ids = events @ (4 ** np.arange(n))
    keys = fold(key, ev_ids)[:, None]
    streams = np.arange(trials, dtype=np.uint64)[None, :]
    Y = np.empty((n_ev, trials, n))
    X = np.empty((n_ev, trials, n))
    W = np.ones((n_ev, trials))
    u_f = np.empty((n_ev, trials, n))
    for r in range(n):
        base = _DRAWS_PER_RELAY * r
        u_piece = uniforms(keys, streams, base)
        u_x = uniforms(keys, streams, base + 1)
        u_y = uniforms(keys, streams, base + 2)
        u_f[..., r] = uniforms(keys, streams, base + 3)
        for code in range(4):
            rows = events[:, r] == code
            if not np.any(rows):
                continue
            y, x, w = sample_region(regions[r], code, u_piece[rows], u_x[rows], u_y[rows])
            Y[rows, :, r] = y
            X[rows, :, r] = x
            W[rows] *= w
    codes = np.broadcast_to(events[:, None, :], Y.shape)
    u, v = _relay_terms(codes, Y, X, gamma, config.p_relay, source)
    O = _second_hop_weighted(u, v, config.nu, gamma, _source_threshold(config.rates, source), u_f)
    wsum = W.sum(axis=1)
    ratio = np.where(wsum > 0, (W * O).sum(axis=1) / np.where(wsum > 0, wsum, 1.0), 0.0)
    resid = W * (O - ratio[:, None])
    se = np.sqrt((resid ** 2).sum(axis=1)) / np.where(wsum > 0, wsum, 1.0)
    return ratio, se


def _plain_batch(event, config, gamma, trials, key, source, probs, sampler):
    """Indicator estimate from rejection or unconditional first-hop draws; returns failures."""
    event = np.asarray(event)
    n = event.size
    rates = config.rates
    streams = np.arange(trials, dtype=np.uint64)
    ev_key = fold(key, [int(event @ (4 ** np.arange(n)))])[0]
    Y = np.empty((trials, n))
    X = np.empty((trials, n))
    F = np.empty((trials, n))
    for r in range(n):
        base = _DRAWS_PER_RELAY * r
        F[:, r] = -np.log1p(-uniforms(ev_key, streams, base + 3)) / config.nu[r]
        mu, lam = config.mu[r], config.lam[r]
        if sampler == "unconditional":
            Y[:, r] = -np.log1p(-uniforms(ev_key, streams, base)) / mu
            X[:, r] = -np.log1p(-uniforms(ev_key, streams, base + 1)) / lam
            continue
        p = probs[r][event[r]]
        if p < MIN_ACCEPTANCE:
            raise RareEventError(
                f"relay {r}: outcome {DecodeEvent(event[r]).name} has probability {p:.3g} at "
                f"gamma={gamma:.4g}; rejection acceptance below {MIN_ACCEPTANCE:g}")
        got = 0
        offset = 0
        while got < trials:
            batch = int(min(5e6, math.ceil((trials - got) / p * 1.2) + 64))
            s = np.arange(offset, offset + batch, dtype=np.uint64)
            y = -np.log1p(-uniforms(ev_key, s, base)) / mu
            x = -np.log1p(-uniforms(ev_key, s, base + 1)) / lam
            keep = decode_codes(y, x, gamma, rates) == event[r]
            take = min(int(keep.sum()), trials - got)
            Y[got:got + take, r] = y[keep][:take]
            X[got:got + take, r] = x[keep][:take]
            got += take
            offset += batch
    codes = np.broadcast_to(event, Y.shape)
    u, v = _relay_terms(codes, Y, X, gamma, config.p_relay, source)
    snr = _snr_of(F, u, v, gamma).sum(axis=-1)
    return int(np.count_nonzero(snr < _source_threshold(rates, source)))


def _relay_probs(config: ScenarioConfig, gamma: float):
    rates = config.rates
    return [event_probs(l, m, rates, gamma).by_event() for l, m in zip(config.lam, config.mu)]


def _relay_regions(config: ScenarioConfig, gamma: float):
    rates = config.rates
    return [_regions(l, m, rates.k1, rates.k2, gamma) for l, m in zip(config.lam, config.mu)]


def second_hop_outage_given_events(events: Sequence[int], config: ScenarioConfig, gamma: float,
                                   trials: int, seed: SeedSpec, source: Source = Source.S1,
                                   sampler: str = "importance") -> OutageEstimate:
    """Destination outage of ``source`` conditioned on one outcome vector over the active relays.

    ``sampler`` selects how the first-hop gains that feed the forwarding
    coefficients are drawn: ``importance`` (weighted draws inside the outcome
    regions), ``rejection`` (exact conditional draws; fails on rare outcomes) or
    ``unconditional`` (ignores the coupling between gains and outcome).
    """
    _check_positive(gamma=gamma)
    if trials < 1000:
        raise ValueError("at least 1000 trials are required")
    if sampler not in SAMPLERS:
        raise ValueError(f"unknown sampler {sampler!r}")
    events = np.asarray([int(e) for e in events], dtype=np.int64)
    if events.size != len(config.active):
        raise ValueError("one outcome per active relay is required")
    key = derive_key(seed.master_seed, ANALYTIC_TAG, seed.stream_index)
    if sampler == "importance":
        ratio, se = _importance_batch(events[None, :], config, gamma, trials, key, Source(source),
                                      _relay_regions(config, gamma))
        return OutageEstimate.from_mean(float(ratio[0]), float(se[0]), trials)
    failures = _plain_batch(events, config, gamma, trials, key, Source(source),
                            _relay_probs(config, gamma), sampler)
    return OutageEstimate.from_counts(failures, trials)


def end_to_end_outage(config: ScenarioConfig, gamma: float, trials_per_event: int = None,
                      seed: SeedSpec = None, source: Source = Source.S1,
                      sampler: str = "importance", min_event_prob: float = 1e-12,
                      max_skipped_fraction: float = 1e-3) -> OutageEstimate:
    """Outage of ``source`` summed over all outcome vectors of the active relays.

    Outcome vectors whose first-hop probability is below ``min_event_prob`` are
    skipped, unless their combined mass exceeds ``max_skipped_fraction`` of the
    estimate from the retained vectors, in which case they are evaluated too.
    Whatever is finally skipped is reported as ``skipped_mass`` and widens the
    upper confidence limit.
    """
    _check_positive(gamma=gamma)
    n = len(config.active)
    if n > MAX_ENUMERATED_RELAYS:
        raise ValueError(f"enumeration supports at most {MAX_ENUMERATED_RELAYS} relays, got {n}; "
                         "use the Monte Carlo estimator instead")
    if sampler not in SAMPLERS:
        raise ValueError(f"unknown sampler {sampler!r}")
    trials = int(trials_per_event or config.trials_per_event)
    seed = seed or SeedSpec(config.master_seed)
    source = Source(source)
    probs = np.array(_relay_probs(config, gamma))  # (n, 4)
    events = np.array(list(itertools.product(range(4), repeat=n)), dtype=np.int64)
    weights = np.prod(probs[np.arange(n), events], axis=1)
    key = derive_key(seed.master_seed, ANALYTIC_TAG, seed.stream_index)

    def contribution(mask):
        ratios, ses = _conditional_outages(events[mask], config, gamma, trials, key, source, sampler)
        return float(np.dot(weights[mask], ratios)), float(np.sum((weights[mask] * ses) ** 2))

    keep = weights >= min_event_prob
    p_hat, var = contribution(keep) if keep.any() else (0.0, 0.0)
    skipped = float(weights[~keep].sum())
    evaluated = int(keep.sum())
    if skipped > max_skipped_fraction * p_hat and (~keep).any():
        p_rest, var_rest = contribution(~keep)
        p_hat += p_rest
        var += var_rest
        skipped = 0.0
        evaluated = len(events)
    return OutageEstimate.from_mean(p_hat, math.sqrt(var), trials * evaluated, skipped_mass=skipped)


def _conditional_outages(events, config, gamma, trials, key, source, sampler):
    """Per-event conditional outage estimates and their standard errors."""
    n = events.shape[1]
    ratios = np.empty(len(events))
    ses = np.empty(len(events))
    if sampler == "importance":
        regions = _relay_regions(config, gamma)
        chunk = max(1, _CHUNK_ELEMENTS // (trials * n))
        for start in range(0, len(events), chunk):
            block = slice(start, start + chunk)
            ratios[block], ses[block] = _importance_batch(events[block], config, gamma, trials, key,
                                                          source, regions)
        return ratios, ses
    rel = _relay_probs(config, gamma)
    for i, ev in enumerate(events):
        failures = _plain_batch(ev, config, gamma, trials, key, source, rel, sampler)
        p = failures / trials
        ratios[i] = p
        ses[i] = math.sqrt(max(p * (1 - p), 1.0 / trials) / trials)
    return ratios, ses


def asymptotic_bounds(config: ScenarioConfig, gamma: float):
    """High-SNR outage asymptotes ``(upper, lower)``.

    ``upper`` is the all-decoded term ``prod(C'_r nu_r) (k1/gamma)^N`` and
    ``lower`` is ``(k1/gamma)^N``; both decay with exponent N.
    """
    _check_positive(gamma=gamma)
    rates = config.rates
    n = len(config.active)
    base = (rates.k1 / gamma) ** n
    factor = 1.0
    for l, m, nu in zip(config.lam, config.mu, config.nu):
        factor *= high_snr_constants(l, m, rates)[1] * nu
    return factor * base, base
