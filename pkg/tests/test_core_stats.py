import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from bnpdep.core_stats import (Dataset, RngStream, as_stream, cholesky,
                               inv_wishart_logpdf, inv_wishart_sample,
                               mvn_logpdf, normal_score_transform,
                               normal_scores, standardize)
from bnpdep.errors import (ContractViolation, DataError, DegenerateColumn,
                           InvalidDegreesOfFreedom, NotSpd)


# --- seeding ---------------------------------------------------------------

def test_stream_replays_from_address():
    a = RngStream(42, (3, 1)).fresh_generator().random(5)
    b = RngStream(42).child(3).child(1).fresh_generator().random(5)
    np.testing.assert_array_equal(a, b)


def test_sibling_streams_differ():
    s = RngStream(42)
    assert s.child(0).kernel_seed() != s.child(1).kernel_seed()
    assert not np.array_equal(s.child(0).fresh_generator().random(4),
                              s.child(1).fresh_generator().random(4))


def test_generator_is_stateful_fresh_generator_is_not():
    s = RngStream(1)
    first = s.generator.random()
    assert s.generator.random() != first
    assert s.fresh_generator().random() == RngStream(1).fresh_generator().random()


def test_stream_validation():
    with pytest.raises(ContractViolation):
        RngStream(-1)
    with pytest.raises(ContractViolation):
        RngStream(2 ** 64)
    with pytest.raises(ContractViolation):
        as_stream("seed")
    assert as_stream(7) == RngStream(7)


# --- Gaussian densities and inverse Wishart --------------------------------

def test_mvn_logpdf_matches_scipy():
    cov = np.array([[2.0, 0.3], [0.3, 0.5]])
    x = np.array([0.4, -1.2])
    mean = np.array([0.1, 0.2])
    want = stats.multivariate_normal(mean, cov).logpdf(x)
    assert mvn_logpdf(x, mean, cholesky(cov)) == pytest.approx(want, rel=1e-13)


@pytest.mark.parametrize("m", [np.array([[1.0, 2.0], [2.0, 1.0]]),
                               np.array([[1.0, 0.5], [0.0, 1.0]]),
                               np.array([[0.0, 0.0], [0.0, 1.0]])])
def test_cholesky_rejects_non_spd(m):
    with pytest.raises(NotSpd):
        cholesky(m)


@pytest.mark.parametrize("df,scale", [(4.0, [[1.0]]),
                                      (5.5, [[2.0, 0.4], [0.4, 1.0]])])
def test_inv_wishart_logpdf_matches_scipy(df, scale):
    scale = np.array(scale)
    s = np.eye(scale.shape[0]) * 0.7 + 0.1
    want = stats.invwishart(df=df, scale=scale).logpdf(s)
    assert inv_wishart_logpdf(s, df, scale) == pytest.approx(want, rel=1e-12)


def test_inv_wishart_sample_mean_and_logdet():
    scale = np.array([[2.0, 0.6], [0.6, 1.0]])
    df = 7.0
    s = RngStream(9)
    draws = np.array([inv_wishart_sample(df, scale, s) for _ in range(20000)])
    # E[S] = scale / (df - p - 1)
    np.testing.assert_allclose(draws.mean(axis=0), scale / (df - 3), rtol=0.04,
                               atol=0.01)
    # compare log-determinants with scipy's sampler (two-sample KS)
    ref = stats.invwishart(df=df, scale=scale).rvs(20000, random_state=1)
    ks = stats.ks_2samp(np.linalg.slogdet(draws)[1], np.linalg.slogdet(ref)[1])
    assert ks.pvalue > 0.001


def test_inv_wishart_bad_df():
    with pytest.raises(InvalidDegreesOfFreedom):
        inv_wishart_sample(0.5, np.eye(2), RngStream(0))


# --- datasets and transforms -----------------------------------------------

def test_dataset_validation():
    with pytest.raises(ContractViolation):
        Dataset(np.zeros((10, 3)))
    with pytest.raises(DataError):
        Dataset(np.zeros((5, 2)))
    v = np.ones((10, 2))
    v[3, 1] = np.nan
    with pytest.raises(DataError):
        Dataset(v)
    d = Dataset(np.arange(20.0).reshape(10, 2))
    assert d.n == 10
    with pytest.raises(ValueError):
        d.values[0, 0] = 5.0


def test_normal_scores_frozen_values():
    # Phi^-1((rank - 0.5)/4) for ranks 1..4
    got = normal_score_transform([10.0, -3.0, 2.0, 7.0])
    want = [1.1503493803760079, -1.1503493803760079, -0.31863936396437515,
            0.31863936396437515]
    np.testing.assert_allclose(got, want, rtol=1e-15)


def test_normal_scores_midranks_for_ties():
    got = normal_score_transform([1.0, 1.0, 2.0])
    assert got[0] == got[1]
    assert got[0] == pytest.approx(stats.norm.ppf(1.0 / 3.0))


def test_constant_column_rejected():
    with pytest.raises(DegenerateColumn):
        normal_score_transform(np.ones(5))
    with pytest.raises(DegenerateColumn):
        standardize(Dataset(np.column_stack([np.ones(10), np.arange(10.0)])))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 12, elements=st.floats(-1e6, 1e6),
              unique=True))
def test_normal_scores_invariant_under_monotone_maps(x):
    a = normal_score_transform(x)
    b = normal_score_transform(np.arctan(x / 1e3) * 7.0 + 3.0)
    c = normal_score_transform(x ** 3)
    # arctan may merge values that are distinct in floating point
    if np.unique(np.arctan(x / 1e3) * 7.0 + 3.0).size == x.size:
        np.testing.assert_array_equal(a, b)
    if np.unique(x ** 3).size == x.size:
        np.testing.assert_array_equal(a, c)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (15, 2), elements=st.floats(-100, 100)))
def test_standardize_moments(v):
    if np.any(np.ptp(v, axis=0) < 1e-6):
        return
    out = standardize(Dataset(v)).values
    np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.std(axis=0, ddof=1), 1.0, rtol=1e-10)


def test_normal_scores_output_standardized():
    g = np.random.default_rng(0)
    z = normal_scores(Dataset(g.exponential(size=(40, 2))))
    assert z.standardized
    np.testing.assert_allclose(z.values.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(z.values.std(axis=0, ddof=1), 1, rtol=1e-12)
