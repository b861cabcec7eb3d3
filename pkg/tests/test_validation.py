import dataclasses
import math

import numpy as np
import pytest

from sicrelay import analytic, validation
from sicrelay.config import RateConfig

_event_probs = analytic.event_probs


def flipped_sign_probs(lam, mu, rates, gamma):
    """Closed forms with the sign of one both-fail term flipped."""
    p = _event_probs(lam, mu, rates, gamma)
    term = lam * math.exp(-mu * rates.k1 / gamma) / (lam + mu * rates.k1)
    return dataclasses.replace(p, p_both_fail=p.p_both_fail + 2 * term)


def test_default_run_passes():
    results = validation.run_validation("small")
    assert [r.status for r in results] == ["pass"] * len(results)
    names = {r.check_name.split("[")[0] for r in results}
    assert {"sum_to_one", "closed_form_vs_mc", "mmse_sinr_identity", "limiting_cases",
            "high_snr_constants", "select_vs_bruteforce"} <= names


def test_wrong_sign_fails_sum_to_one():
    res = validation.check_sum_to_one(n=500, probs_fn=flipped_sign_probs)
    assert res.status == "fail" and res.measured > 1e-3
    by_name = {r.check_name.split("[")[0]: r for r in validation.run_validation("small", probs_fn=flipped_sign_probs)}
    assert by_name["sum_to_one"].status == "fail"
    assert by_name["closed_form_vs_mc"].status == "fail"


def test_z_scores_scale_with_trials():
    rates = RateConfig(1.0, 1.0, 3)
    z_small, _, p = validation.event_z_scores(1.0, 1.0, rates, 10.0, 1000, np.random.default_rng(1))
    z_big, _, _ = validation.event_z_scores(1.0, 1.0, rates, 10.0, 100_000, np.random.default_rng(1))
    assert np.all(z_small < 3) and np.all(z_big < 3)
    # a probability that is off by 0.01 hides at 1e3 draws and shows at 1e6
    def off(lam, mu, r, g):
        q = analytic.event_probs(lam, mu, r, g)
        return dataclasses.replace(q, p_both_fail=q.p_both_fail + 0.01, p_both_ok=q.p_both_ok - 0.01)
    assert validation.event_z_scores(1.0, 1.0, rates, 10.0, 1000, np.random.default_rng(2), off)[0].max() < 3
    assert validation.event_z_scores(1.0, 1.0, rates, 10.0, 1_000_000, np.random.default_rng(2), off)[0].max() > 3


def test_event_grid_sizes():
    assert len(validation.event_grid("full")) == 75
    assert len(validation.event_grid("small")) == 18
    with pytest.raises(ValueError):
        validation.event_grid("medium")


def test_result_records():
    r = validation.check_selection(n=5)
    assert r.to_dict() == {"check_name": "select_vs_bruteforce", "status": "pass", "measured": 0.0,
                           "tolerance": 0.0}
    assert validation.brute_force_best([1, 5, 3], 2) == (1, 2)
