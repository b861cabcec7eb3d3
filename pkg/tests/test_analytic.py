import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sicrelay.analytic import (RareEventError, asymptotic_bounds, end_to_end_outage, event_probs,
                               high_snr_constants, second_hop_outage_given_events)
from sicrelay.config import RateConfig, ScenarioConfig
from sicrelay.protocol import DecodeEvent, Source, decode_codes
from sicrelay.rng import SeedSpec

K = RateConfig.from_thresholds
BOTH, NONE = DecodeEvent.BOTH, DecodeEvent.NONE
rate_params = st.floats(1e-2, 1e2)
thresholds = st.floats(0.03, 30.0)
gammas = st.floats(1e-2, 1e6)


def reference_form(lam, mu, k1, k2, gamma):
    """The four outcome probabilities transcribed term by term, no rearrangement."""
    e = math.exp
    both_fail = (lam / (lam + mu * k1 / k2) - lam * e(-mu * k1 / gamma) / (lam + mu * k1)
                 + mu / (lam * k2 / k1 + mu) - mu * e(-lam * k2 / gamma) / (mu + lam * k2))
    s1fail_s2ok = mu * e(-lam * k2 / gamma) / (mu + lam * k2) * (1 - e(-(mu + lam * k2) * k1 / gamma))
    s1ok_s2fail = lam * e(-mu * k1 / gamma) / (lam + mu * k1) * (1 - e(-(lam + mu * k1) * k2 / gamma))
    both_ok = (1 + lam * e(-mu * k1 / gamma) / (lam + mu * k1) * e(-(lam + mu * k1) * k2 / gamma)
               + mu * e(-lam * k2 / gamma) / (mu + lam * k2) * e(-(mu + lam * k2) * k1 / gamma)
               - lam / (lam + mu * k1 / k2) - mu / (mu + lam * k2 / k1))
    return np.array([both_fail, s1ok_s2fail, s1fail_s2ok, both_ok])  # indexed by outcome code


def mc_frequencies(lam, mu, k1, k2, gamma, n=2_000_000, seed=0):
    rng = np.random.default_rng(seed)
    codes = decode_codes(rng.exponential(1 / mu, n), rng.exponential(1 / lam, n), gamma, K(k1, k2))
    return np.bincount(codes, minlength=4) / n


def test_unit_example_values():
    p = event_probs(1.0, 1.0, K(1, 1), 10.0)
    assert p.p_both_fail == pytest.approx(0.0951626, abs=1e-6)
    assert p.p_s1fail_s2ok == pytest.approx(0.0820096, abs=1e-6)
    assert p.p_s1ok_s2fail == pytest.approx(0.0820096, abs=1e-6)
    assert p.p_both_ok == pytest.approx(0.7408182, abs=1e-6)
    assert p.total() == pytest.approx(1.0, abs=1e-12)
    assert p[DecodeEvent.ONLY_S1] == p.p_s1ok_s2fail


@pytest.mark.parametrize("lam,mu,k1,k2,gamma", [
    (1, 1, 1, 1, 10), (0.3, 2, 1.8, 7, 5), (5, 0.5, 2, 2, 1), (1, 1, 3, 3, 100), (2, 1, 1, 4, 0.5),
])
def test_agrees_with_reference_form_when_thresholds_at_least_one(lam, mu, k1, k2, gamma):
    p = event_probs(lam, mu, K(k1, k2), gamma).by_event()
    assert np.allclose(p, reference_form(lam, mu, k1, k2, gamma), atol=1e-12)


@pytest.mark.parametrize("lam,mu,k1,k2,gamma", [
    (1, 1, 1, 1, 10), (0.3, 2, 1.8, 7, 5), (1, 1, 0.5, 3, 2), (1, 1, 3, 0.5, 2),
    (2, 0.5, 0.4, 0.6, 1), (0.1, 1, 0.3, 0.3, 20), (10, 1, 7, 1.8, 30),
])
def test_closed_forms_match_monte_carlo(lam, mu, k1, k2, gamma):
    n = 2_000_000
    p = event_probs(lam, mu, K(k1, k2), gamma).by_event()
    freq = mc_frequencies(lam, mu, k1, k2, gamma, n, seed=int(1000 * lam + 10 * k1 + k2))
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(freq - p) <= 3 * se + 1e-12)


def test_reference_form_breaks_below_unit_threshold():
    # with k2 < 1 the S1-first failure strip is bounded; the untruncated form overcounts it
    n = 2_000_000
    for lam, mu, k1, k2, gamma in ((1.0, 1.0, 3.0, 0.5, 2.0), (0.2, 0.2, 1.0, 0.1, 30.0)):
        freq = mc_frequencies(lam, mu, k1, k2, gamma, n, seed=5)
        ours = event_probs(lam, mu, K(k1, k2), gamma).p_both_fail
        se = math.sqrt(ours * (1 - ours) / n)
        assert abs(freq[NONE] - ours) < 3 * se
        assert abs(freq[NONE] - reference_form(lam, mu, k1, k2, gamma)[NONE]) > 8 * se
    assert reference_form(0.2, 0.2, 1.0, 0.1, 30.0)[NONE] < 0


@settings(max_examples=500, deadline=None)
@given(rate_params, rate_params, thresholds, thresholds, gammas)
def test_probabilities_valid_and_sum_to_one(lam, mu, k1, k2, gamma):
    p = event_probs(lam, mu, K(k1, k2), gamma)
    v = p.by_event()
    assert np.all(v >= -1e-15) and np.all(v <= 1 + 1e-15)
    assert abs(p.total() - 1.0) < 1e-12


@settings(max_examples=300, deadline=None)
@given(rate_params, rate_params, thresholds, thresholds, gammas)
def test_swapping_sources_swaps_mixed_outcomes(lam, mu, k1, k2, gamma):
    p = event_probs(lam, mu, K(k1, k2), gamma)
    q = event_probs(mu, lam, K(k2, k1), gamma)
    assert q.p_s1fail_s2ok == pytest.approx(p.p_s1ok_s2fail, rel=1e-9, abs=1e-15)
    assert q.p_s1ok_s2fail == pytest.approx(p.p_s1fail_s2ok, rel=1e-9, abs=1e-15)
    assert q.p_both_fail == pytest.approx(p.p_both_fail, rel=1e-9, abs=1e-15)
    assert q.p_both_ok == pytest.approx(p.p_both_ok, rel=1e-9, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(rate_params, rate_params, thresholds, thresholds)
def test_monotone_in_snr(lam, mu, k1, k2):
    grid = np.logspace(-2, 7, 40)
    ps = [event_probs(lam, mu, K(k1, k2), g) for g in grid]
    fail = np.array([p.p_both_fail for p in ps])
    ok = np.array([p.p_both_ok for p in ps])
    assert np.all(np.diff(fail) <= 1e-12)
    assert np.all(np.diff(ok) >= -1e-12)


@pytest.mark.parametrize("k1,k2", [(1, 1), (2 ** 1.5 - 1, 7), (7, 7)])
@pytest.mark.parametrize("gamma", [1.0, 10.0, 100.0])
def test_weak_interferer_limits(k1, k2, gamma):
    p = event_probs(1e8, 1.0, K(k1, k2), gamma)
    assert p.p_both_fail == pytest.approx(-math.expm1(-k1 / gamma), abs=1e-6)
    assert p.p_s1fail_s2ok < 1e-6
    assert p.p_s1ok_s2fail == pytest.approx(math.exp(-k1 / gamma), abs=1e-6)


def test_mixed_outcomes_vanish_at_high_snr():
    for lam, mu in ((0.1, 1.0), (1.0, 1.0), (3.0, 0.2)):
        p = event_probs(lam, mu, K(2, 5), 1e9)
        assert p.p_s1ok_s2fail < 1e-6 and p.p_s1fail_s2ok < 1e-6


def test_high_snr_constants_examples():
    c, cp = high_snr_constants(1.0, 1.0, K(1, 1))
    assert c == pytest.approx(0.0, abs=1e-15) and cp == pytest.approx(1.0)
    c, cp = high_snr_constants(1.0, 1.0, K(3, 3))
    assert c == pytest.approx(0.5) and cp == pytest.approx(0.5)
    p = event_probs(1.0, 1.0, K(3, 3), 1e9)
    assert abs(p.p_both_fail - c) < 1e-6 and abs(p.p_both_ok - cp) < 1e-6


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.2, 10), st.floats(0.2, 10))
def test_high_snr_constants_are_limits(lam, mu, k1, k2):
    c, cp = high_snr_constants(lam, mu, K(k1, k2))
    assert c + cp == pytest.approx(1.0, abs=1e-12)
    p = event_probs(lam, mu, K(k1, k2), 1e11)
    assert p.p_both_fail == pytest.approx(c, abs=1e-6)
    assert p.p_both_ok == pytest.approx(cp, abs=1e-6)


@pytest.mark.parametrize("bad", [dict(lam=0.0), dict(mu=-1.0), dict(gamma=float("nan")),
                                 dict(gamma=float("inf"))])
def test_rejects_bad_parameters(bad):
    args = dict(lam=1.0, mu=1.0, gamma=1.0) | bad
    with pytest.raises(ValueError):
        event_probs(args["lam"], args["mu"], K(1, 1), args["gamma"])


# --- second hop and end-to-end ------------------------------------------------

def test_all_decoded_second_hop_is_erlang2():
    cfg = ScenarioConfig.symmetric(2)
    k1, gamma = cfg.rates.k1, 5.0
    x = 2 * k1 / gamma
    exact = 1 - math.exp(-x) * (1 + x)
    for sampler in ("importance", "rejection"):
        est = second_hop_outage_given_events([BOTH, BOTH], cfg, gamma, 20_000, SeedSpec(3), sampler=sampler)
        sigma = max(est.ci_half_width / 1.96, 1e-12)
        assert abs(est.p_hat - exact) <= 3 * sigma + 1e-12, sampler


def test_second_hop_at_vanishing_snr():
    cfg = ScenarioConfig.symmetric(2)
    for events in ([BOTH, BOTH], [NONE, DecodeEvent.ONLY_S1]):
        est = second_hop_outage_given_events(events, cfg, 1e-6, 2000, SeedSpec(1), sampler="unconditional")
        assert est.p_hat > 0.999


def test_doubling_trials_shrinks_interval_by_sqrt2():
    cfg = ScenarioConfig.symmetric(2)
    ev = [NONE, BOTH]
    for sampler in ("rejection", "importance"):
        a = second_hop_outage_given_events(ev, cfg, 10.0, 20_000, SeedSpec(4), sampler=sampler)
        b = second_hop_outage_given_events(ev, cfg, 10.0, 40_000, SeedSpec(4), sampler=sampler)
        assert a.ci_half_width / b.ci_half_width == pytest.approx(math.sqrt(2), rel=0.1), sampler


@pytest.mark.parametrize("events", [[NONE, BOTH], [DecodeEvent.ONLY_S2, DecodeEvent.ONLY_S1], [NONE, NONE]])
def test_importance_and_rejection_samplers_agree(events):
    cfg = ScenarioConfig(h_mean=[[1, 2], [0.5, 1]], f_mean=[1, 0.5])
    imp = second_hop_outage_given_events(events, cfg, 10.0, 40_000, SeedSpec(8))
    rej = second_hop_outage_given_events(events, cfg, 10.0, 40_000, SeedSpec(8), sampler="rejection")
    assert imp.overlaps(rej)


def test_rejection_fails_on_rare_outcome():
    cfg = ScenarioConfig.symmetric(2, R1=2 / 3, R2=2 / 3)  # unit thresholds: both-fail mass vanishes
    with pytest.raises(RareEventError, match="acceptance"):
        second_hop_outage_given_events([NONE, NONE], cfg, 1e9, 1000, SeedSpec(1), sampler="rejection")
    est = second_hop_outage_given_events([NONE, NONE], cfg, 1e9, 1000, SeedSpec(1))
    assert 0.0 <= est.p_hat <= 1.0


def test_second_hop_argument_checks():
    cfg = ScenarioConfig.symmetric(2)
    with pytest.raises(ValueError):
        second_hop_outage_given_events([BOTH, BOTH], cfg, 1.0, 999, SeedSpec(1))
    with pytest.raises(ValueError):
        second_hop_outage_given_events([BOTH], cfg, 1.0, 1000, SeedSpec(1))
    with pytest.raises(ValueError):
        second_hop_outage_given_events([BOTH, BOTH], cfg, 1.0, 1000, SeedSpec(1), sampler="magic")


def test_end_to_end_at_vanishing_snr():
    est = end_to_end_outage(ScenarioConfig.symmetric(2), 1e-4, trials_per_event=1000)
    assert est.p_hat > 0.999


def test_end_to_end_rejects_too_many_relays():
    with pytest.raises(ValueError, match="at most 8"):
        end_to_end_outage(ScenarioConfig.symmetric(9), 10.0)


def test_end_to_end_symmetric_sources_agree():
    cfg = ScenarioConfig.symmetric(2, trials_per_event=4000)
    s1 = end_to_end_outage(cfg, 31.6, source=Source.S1)
    s2 = end_to_end_outage(cfg, 31.6, source=Source.S2)
    assert s1.overlaps(s2)


def test_end_to_end_samplers_and_deterministic():
    cfg = ScenarioConfig.symmetric(2, trials_per_event=3000)
    a = end_to_end_outage(cfg, 10.0, seed=SeedSpec(5))
    assert a.p_hat == end_to_end_outage(cfg, 10.0, seed=SeedSpec(5)).p_hat
    rej = end_to_end_outage(cfg, 10.0, seed=SeedSpec(5), sampler="rejection")
    assert a.overlaps(rej)
    unc = end_to_end_outage(cfg, 10.0, seed=SeedSpec(5), sampler="unconditional")
    assert 0 < unc.p_hat < 1


def test_skipped_mass_is_reported():
    cfg = ScenarioConfig.symmetric(2, trials_per_event=1000)
    est = end_to_end_outage(cfg, 100.0, min_event_prob=1e-2, max_skipped_fraction=1e9)
    assert est.skipped_mass > 0
    lo, hi = est.interval
    assert hi >= est.p_hat + est.skipped_mass - 1e-15


def test_high_snr_slope_matches_relay_count():
    cfg = ScenarioConfig.symmetric(2, trials_per_event=4000)
    g = np.array([1e4, 1e5])
    p = [end_to_end_outage(cfg, x).p_hat for x in g]
    slope = -np.diff(np.log10(p))[0]
    assert slope == pytest.approx(2.0, abs=0.15)


def test_asymptotic_bounds():
    cfg = ScenarioConfig.symmetric(2, R1=2 / 3, R2=2 / 3)
    up, lo = asymptotic_bounds(cfg, 1e3)
    assert up == pytest.approx(lo)  # unit thresholds give C' = 1, and nu = 1
    up2, lo2 = asymptotic_bounds(cfg, 2e3)
    assert up / up2 == pytest.approx(4) and lo / lo2 == pytest.approx(4)
    rated = ScenarioConfig.symmetric(2)
    gamma = 1e5
    p = end_to_end_outage(rated, gamma).p_hat
    u, l_ = asymptotic_bounds(rated, gamma)
    assert u < l_
    assert u / 10 <= p <= 10 * l_
