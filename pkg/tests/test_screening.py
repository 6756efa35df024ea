import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bnpdep import baselines as bl
from bnpdep.core_stats import Dataset, RngStream
from bnpdep.errors import ContractViolation, UndefinedKappa
from bnpdep.rjmcmc import ChainConfig
from bnpdep.screening import (ScreenConfig, bfdr_select, bh_select,
                              cohens_kappa, pairwise_screen, power_study,
                              two_proportion_z)

probs = arrays(np.float64, st.integers(1, 40),
               elements=st.floats(1e-6, 1.0, allow_subnormal=False))


def _bh_oracle(p, q):
    m = len(p)
    ok = [k for k in range(1, m + 1) if sorted(p)[k - 1] <= k * q / m]
    if not ok:
        return set()
    cut = sorted(p)[max(ok) - 1]
    # ties at the cut value are all rejected by the step-up rule
    return {i for i, v in enumerate(p) if v <= cut}


# --- BH ----------------------------------------------------------------------

def test_bh_worked_example():
    assert bh_select([0.001, 0.02, 0.9], 0.05) == {0, 1}
    assert bh_select([0.9, 0.001, 0.02], 0.05) == {1, 2}


def test_bh_all_ones():
    assert bh_select(np.ones(10), 0.05) == frozenset()


def test_bh_step_up_not_step_down():
    # p_(1) fails its own bound but p_(2) passes, so both are rejected
    assert bh_select([0.04, 0.045], 0.05) == {0, 1}


@settings(max_examples=100, deadline=None)
@given(probs, st.floats(0.001, 0.5))
def test_bh_matches_oracle(p, q):
    assert bh_select(p, q) == _bh_oracle(list(p), q)


@settings(max_examples=100, deadline=None)
@given(probs, st.floats(0.001, 0.3), st.floats(0.0, 0.3))
def test_bh_monotone_in_q(p, q, dq):
    assert bh_select(p, q) <= bh_select(p, q + dq)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1.0), st.integers(1, 30), st.floats(0.001, 0.5))
def test_bh_equal_pvalues_all_or_none(v, m, q):
    out = bh_select(np.full(m, v), q)
    assert len(out) in (0, m)


def test_bh_contract():
    with pytest.raises(ContractViolation):
        bh_select([0.0, 0.5], 0.05)


# --- BFDR ---------------------------------------------------------------------

def test_bfdr_worked_example():
    assert bfdr_select([0.01, 0.02, 0.5], 0.05) == {0, 1}


def test_bfdr_all_above_q():
    assert bfdr_select([0.2, 0.3, 0.9], 0.05) == frozenset()


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 40), elements=st.floats(0.0, 1.0)),
       st.floats(0.0, 0.5))
def test_bfdr_prefix_and_mean(p, q):
    out = bfdr_select(p, q)
    order = np.argsort(p, kind="mergesort")
    k = len(out)
    assert out == set(int(i) for i in order[:k])
    if k:
        assert p[order[:k]].mean() <= q
    if k < p.size:
        assert p[order[:k + 1]].mean() > q or \
            np.any(np.cumsum(p[order])[k:] / np.arange(k + 1, p.size + 1) > q)


# --- kappa --------------------------------------------------------------------

def test_kappa_trivial_and_constructed():
    a = np.r_[np.ones(50, bool), np.zeros(50, bool)]
    assert cohens_kappa(a, a) == 1.0
    # each rejects 50, agreement on 80
    b = a.copy()
    b[:10] = False
    b[50:60] = True
    assert cohens_kappa(a, b) == pytest.approx(0.6, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=2, max_size=50))
def test_kappa_symmetric(pairs):
    a, b = map(np.array, zip(*pairs))
    try:
        k = cohens_kappa(a, b)
    except UndefinedKappa:
        return
    assert k == pytest.approx(cohens_kappa(b, a), rel=1e-12, abs=1e-15)
    assert -1.0 <= k <= 1.0


def test_kappa_independent_vectors_near_zero():
    g = np.random.default_rng(0)
    assert abs(cohens_kappa(g.random(100_000) < 0.3, g.random(100_000) < 0.6)) < 0.02


def test_kappa_undefined():
    with pytest.raises(UndefinedKappa):
        cohens_kappa(np.ones(5, bool), np.ones(5, bool))
    with pytest.raises(ContractViolation):
        cohens_kappa([True], [True, False])


# --- pairwise screen ----------------------------------------------------------

def _matrix(n=40, k=5, seed=0):
    g = np.random.default_rng(seed)
    m = g.standard_normal((n, k))
    m[:, 1] += 2 * m[:, 0]
    return m


@pytest.mark.parametrize("method", ["LR", "HHG"])
def test_screen_structure_and_consistency(method):
    m = _matrix()
    # 499 permutations so the smallest p-value can pass BH's 0.05/10 bound
    rep = pairwise_screen(m, method, ScreenConfig(n_perm=499), RngStream(1))
    assert len(rep.pairs) == 10
    assert [(p.i, p.j) for p in rep.pairs] == [(i, j) for i in range(5)
                                               for j in range(i + 1, 5)]
    assert rep.rejected == {(p.i, p.j) for p in rep.pairs if p.result.reject}
    assert (0, 1) in rep.rejected
    assert rep.runtime >= 0
    # pair (i, j) is the plain test on stream child(i, j)
    p = rep.pairs[3]
    direct = bl.run_baseline(method, m[:, p.i], m[:, p.j], 0.05, 499,
                             RngStream(1).child(p.i, p.j))
    assert direct.p_value == p.result.p_value


def test_screen_94_columns_pair_count():
    rep = pairwise_screen(np.random.default_rng(0).standard_normal((30, 94)), "LR",
                          rng=0)
    assert len(rep.pairs) == 4371


def test_screen_deterministic_across_workers():
    m = _matrix(k=4)
    cfgs = [ScreenConfig(n_perm=29, workers=w,
                         chain=ChainConfig(400, 100)) for w in (1, 3)]
    for method in ("DDP", "DPM"):
        a, b = (pairwise_screen(m, method, c, RngStream(2)) for c in cfgs)
        assert a.pairs == b.pairs and a.rejected == b.rejected


def test_screen_quarantines_failures():
    m = _matrix(k=3)
    m[:, 2] = np.round(m[:, 2])  # ties: DDP cannot run on pairs with column 2
    rep = pairwise_screen(m, "DDP", ScreenConfig(n_perm=19), RngStream(0))
    assert len(rep.failures) == 2
    assert all("TiesUnsupported" in f.error for f in rep.failures)
    assert rep.pairs[0].result is not None


def test_screen_dpm_uses_bfdr():
    m = _matrix(k=3)
    rep = pairwise_screen(m, "DPM", ScreenConfig(chain=ChainConfig(600, 150),
                                                 fdr_level=0.05), RngStream(0))
    post_h0 = [1 - p.result.posterior_h1 for p in rep.pairs]
    want = bfdr_select(post_h0, 0.05)
    assert rep.rejected == {(rep.pairs[k].i, rep.pairs[k].j) for k in want}
    assert (0, 1) in rep.rejected


def test_screen_contract():
    with pytest.raises(ContractViolation):
        pairwise_screen(np.zeros((20, 1)), "LR")
    with pytest.raises(ContractViolation):
        pairwise_screen(np.zeros((5, 3)), "LR")
    with pytest.raises(ContractViolation):
        pairwise_screen(_matrix(), "XYZ")


# --- power study -------------------------------------------------------------

def test_two_proportion_z_frozen():
    assert two_proportion_z(90, 100, 50, 100) == pytest.approx(6.172133998483678,
                                                               rel=1e-14)
    assert two_proportion_z(0, 50, 0, 50) == 0.0


def test_power_study_layout_and_determinism():
    kw = dict(scenarios=["Null", "Circle"], methods=["LR", "HHG"],
              n_values=[30], replicates=20, n_perm=19)
    a = power_study(rng=RngStream(3), **kw)
    b = power_study(rng=RngStream(3), workers=4, **kw)
    assert a.rows == (("Null", 30), ("Circle", 30))
    assert a.columns == ("LR", "HHG")
    np.testing.assert_array_equal(a.cells, b.cells)
    assert np.all((a.cells >= 0) & (a.cells <= 1))
    assert a.cell("Circle", 30, "HHG") > a.cell("Circle", 30, "LR")
    assert not a.significant.any()  # no DPM column, nothing to compare


def test_power_study_marks_against_dpm():
    t = power_study(["Circle"], ["LR", "DPM"], [40], replicates=20, n_perm=19,
                    chain=ChainConfig(400, 100), rng=RngStream(1))
    r, c = t.rejections[0]
    z = two_proportion_z(int(r), 20, int(c), 20)
    assert t.significant[0, 0] == (abs(z) > 1.959963984540054)
    assert not t.significant[0, 1]


def test_power_study_contract():
    with pytest.raises(ContractViolation):
        power_study(["Null"], ["LR"], [30], replicates=10)
    with pytest.raises(ContractViolation):
        power_study(["Spiral"], ["LR"], [30], replicates=20)
    with pytest.raises(ContractViolation):
        power_study(["Null"], ["XYZ"], [30], replicates=20)
