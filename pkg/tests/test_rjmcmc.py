import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bnpdep.core_stats import Dataset, RngStream, normal_scores
from bnpdep.dpm_engine import Hyperparams, check_state, prior_state
from bnpdep.errors import ContractViolation
from bnpdep.rjmcmc import (CalibratedTest, ChainConfig, ChainTrace,
                           ModelIndicator, acceptance_log_ratio,
                           canonical_null_data, dpm_test, estimate_evidence,
                           null_calibration, order_statistic_threshold,
                           permutation_threshold, propose_cross_model,
                           run_chain)

HP = Hyperparams()
SHORT = ChainConfig(iterations=400, burn_in=100)


def _z(n=40, seed=0, dep=0.0):
    g = np.random.default_rng(seed)
    x = g.standard_normal(n)
    y = dep * x + g.standard_normal(n)
    return normal_scores(Dataset.from_columns(x, y))


def test_config_validation():
    with pytest.raises(ContractViolation):
        ChainConfig(iterations=10, burn_in=10)
    with pytest.raises(ContractViolation):
        ChainConfig(switch_probability=0.3)
    with pytest.raises(ContractViolation):
        ChainConfig(init="random")
    assert ChainConfig(initial_model="J").initial_model is ModelIndicator.J


def test_trace_shape_and_determinism():
    z = _z()
    a = run_chain(z, HP, SHORT, RngStream(4))
    b = run_chain(z, HP, SHORT, RngStream(4))
    assert len(a) == 300
    assert set(np.unique(a.indicator)) <= {0, 1}
    np.testing.assert_array_equal(a.indicator, b.indicator)
    np.testing.assert_array_equal(a.loglik, b.loglik)
    assert all(acc <= prop for acc, prop in zip(a.accept_count, a.propose_count))
    assert sum(a.propose_count) == pytest.approx(0.5 * SHORT.iterations,
                                                 abs=4 * math.sqrt(100))


@pytest.mark.parametrize("init,start", [("data", "I"), ("prior", "J")])
def test_prior_only_chain_visits_both_models_equally(init, start):
    cfg = ChainConfig(iterations=6000, burn_in=0, init=init, initial_model=start)
    pj = np.mean(run_chain(_z(20), HP, cfg, RngStream(9), tau=0.0).indicator)
    assert pj == pytest.approx(0.5, abs=0.06)


def test_evidence_add_one_smoothing():
    tr = ChainTrace(np.ones(1500, dtype=np.int8), np.zeros(1500), (0, 0), (0, 0))
    ev = estimate_evidence(tr)
    assert ev.posterior_h1 == 1501 / 1502
    assert ev.bayes_factor == pytest.approx(1501.0, rel=1e-12)
    tr0 = ChainTrace(np.zeros(10, dtype=np.int8), np.zeros(10), (0, 0), (0, 0))
    assert estimate_evidence(tr0, prior_odds=2.0).bayes_factor == \
        pytest.approx((1 / 12) / (11 / 12) / 2.0)


@pytest.mark.parametrize("m,alpha,rank", [(19, 0.05, 19), (100, 0.05, 96),
                                          (99, 0.05, 95), (40, 0.1, 37)])
def test_order_statistic_rank(m, alpha, rank):
    bfs = np.arange(1.0, m + 1.0)[::-1]
    assert order_statistic_threshold(bfs, alpha) == float(rank)


def test_order_statistic_too_few_permutations():
    assert order_statistic_threshold(np.ones(10), 0.05) == math.inf


# --- cross-model move -------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_round_trip_preserves_shared_block(seed):
    z = _z(25)
    s = prior_state("I", 25, HP, RngStream(seed))
    j, _, _ = propose_cross_model("I", s, HP, z, RngStream(seed + 1))
    check_state(j, 25)
    back, _, _ = propose_cross_model("J", j, HP, z, RngStream(seed + 2))
    check_state(back, 25)
    np.testing.assert_array_equal(back.mu, s.mu)
    assert back.S[0, 0] == s.S[0, 0] and back.S[1, 1] == s.S[1, 1]
    assert back.r == s.r and back.r_index == s.r_index
    assert j.S[0, 0] == s.S[0, 0] and j.S[1, 1] == s.S[1, 1]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_acceptance_ratio_antisymmetric(seed):
    z = _z(25)
    s = prior_state("I", 25, HP, RngStream(seed))
    j, lq_f, lq_r = propose_cross_model("I", s, HP, z, RngStream(seed + 1))
    fwd = acceptance_log_ratio(s, j, lq_f, lq_r, z, HP)
    rev = acceptance_log_ratio(j, s, lq_r, lq_f, z, HP)
    assert math.isfinite(fwd)
    assert fwd == pytest.approx(-rev, rel=1e-12, abs=1e-9)
    assert acceptance_log_ratio(s, s, 0.0, 0.0, z, HP) == 0.0


def test_proposal_type_checks():
    z = _z(25)
    s = prior_state("I", 25, HP, RngStream(0))
    with pytest.raises(ContractViolation):
        propose_cross_model("J", s, HP, z, RngStream(1))


# --- calibrated test --------------------------------------------------------

def test_permutation_threshold_deterministic():
    z = _z(30)
    a = permutation_threshold(z, HP, SHORT, 19, 0.05, RngStream(2))
    b = permutation_threshold(z, HP, SHORT, 19, 0.05, RngStream(2), workers=4)
    assert a == b
    assert a.threshold_T == max(a.permuted_bfs)
    with pytest.raises(ContractViolation):
        permutation_threshold(z, HP, SHORT, 10)


def test_canonical_null_data_shares_scores():
    z = _z(30, seed=3)
    c = canonical_null_data(30)
    for j in range(2):
        np.testing.assert_allclose(np.sort(z.values[:, j]), c.values[:, j],
                                   rtol=0, atol=1e-15)


def test_dpm_test_detects_strong_dependence():
    g = np.random.default_rng(1)
    x = g.standard_normal(60)
    data = Dataset.from_columns(x, x + 0.2 * g.standard_normal(60))
    res = dpm_test(data, None, ChainConfig(1000, 250), 19, 0.05, RngStream(3))
    assert res.method == "DPM" and res.p_value is None
    assert res.reject and res.statistic > res.threshold
    assert res.posterior_h1 > 0.9


def test_dpm_test_uses_shared_calibration_only_without_ties():
    g = np.random.default_rng(2)
    data = Dataset.from_columns(g.standard_normal(30), g.standard_normal(30))
    fake = CalibratedTest(123.0, 19, 0.05)
    res = dpm_test(data, HP, SHORT, 19, 0.05, RngStream(1), calibration=fake)
    assert res.threshold == 123.0
    tied = Dataset.from_columns(np.repeat(np.arange(15.0), 2),
                                g.standard_normal(30))
    res = dpm_test(tied, HP, SHORT, 19, 0.05, RngStream(1), calibration=fake)
    assert res.threshold != 123.0


def test_null_calibration_is_permutation_threshold_of_canonical_data():
    a = null_calibration(30, HP, SHORT, 19, 0.05, RngStream(5))
    b = permutation_threshold(canonical_null_data(30), HP, SHORT, 19, 0.05,
                              RngStream(5))
    assert a == b


def test_prior_only_occupancy_unbiased_over_many_chains():
    # one 10^4-iteration chain has sd ~0.02 here; 40 chains pin the mean
    z = _z(10)
    cfg = [ChainConfig(iterations=10_000, burn_in=1000, init="prior",
                       initial_model=m) for m in ("I", "J")]
    pj = [np.mean(run_chain(z, HP, cfg[k % 2], RngStream(500 + k), tau=0.0).indicator)
          for k in range(40)]
    assert np.mean(pj) == pytest.approx(0.5, abs=0.012)
