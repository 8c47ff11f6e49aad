import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import lognorm, norm

from disagg.model import (
    AggregatedDataset,
    BucketRecord,
    DomainError,
    NormalGammaPrior,
    NormalParams,
    RngStream,
    aggregated_normal_logpdf,
    lognormal_logpdf,
    sample_dirichlet,
)


def test_lognormal_logpdf_standard():
    assert lognormal_logpdf(1.0, NormalParams(0.0, 1.0)) == pytest.approx(-0.9189385332046727, abs=1e-12)


def test_lognormal_logpdf_study_scale():
    # -log 250 - log 0.1 - 0.5 log(2 pi)
    v = lognormal_logpdf(250.0, NormalParams(math.log(250.0), 100.0))
    assert v == pytest.approx(-4.137814358072873, abs=1e-10)


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_lognormal_logpdf_support(x):
    with pytest.raises(DomainError):
        lognormal_logpdf(x, NormalParams(0.0, 1.0))


def test_lognormal_logpdf_matches_scipy():
    x = np.array([0.3, 1.0, 7.5, 250.0])
    p = NormalParams(1.2, 2.5)
    expected = lognorm.logpdf(x, s=p.sigma, scale=math.exp(p.mu))
    np.testing.assert_allclose(lognormal_logpdf(x, p), expected, rtol=1e-12)


def test_nonfinite_params_rejected():
    with pytest.raises(DomainError):
        NormalParams(float("nan"), 1.0)
    with pytest.raises(DomainError):
        NormalParams(0.0, 0.0)


@pytest.mark.parametrize("mu,sigma", [(0.0, 1.0), (math.log(250.0), 0.1), (2.0, 0.5)])
def test_lognormal_integrates_to_one(mu, sigma):
    upper = math.exp(mu + 8 * sigma)
    x = np.geomspace(upper * 1e-12, upper, 400_001)
    dens = np.exp(lognormal_logpdf(x, NormalParams(mu, sigma**-2)))
    assert np.trapezoid(dens, x) == pytest.approx(1.0, abs=1e-4)


def test_aggregated_normal_logpdf_value():
    v = aggregated_normal_logpdf(0.0, 4, NormalParams(0.0, 1.0))
    assert v == pytest.approx(0.5 * math.log(4 / (2 * math.pi)), abs=1e-12)


def test_aggregated_normal_mode_at_mean():
    p = NormalParams(3.0, 2.0)
    grid = np.linspace(1.0, 5.0, 401)
    vals = aggregated_normal_logpdf(grid, 5, p)
    assert grid[np.argmax(vals)] == pytest.approx(3.0)


def test_aggregated_normal_n1_is_normal():
    p = NormalParams(1.0, 4.0)
    assert aggregated_normal_logpdf(0.3, 1, p) == pytest.approx(norm.logpdf(0.3, 1.0, 0.5), abs=1e-13)


def test_aggregated_normal_rejects_bad_n():
    with pytest.raises(DomainError):
        aggregated_normal_logpdf(0.0, 0, NormalParams(0.0, 1.0))


@given(
    xbar=st.floats(-1e3, 1e3),
    n=st.integers(1, 1000),
    mu=st.floats(-1e3, 1e3),
    tau=st.floats(1e-4, 1e4),
)
def test_aggregated_normal_scaling_identity(xbar, n, mu, tau):
    assert aggregated_normal_logpdf(xbar, n, NormalParams(mu, tau)) == aggregated_normal_logpdf(
        xbar, 1, NormalParams(mu, n * tau)
    )


def test_dirichlet_single_component(rng):
    np.testing.assert_array_equal(sample_dirichlet([5.0], rng), [1.0])


def test_dirichlet_symmetric_mean(rng):
    w = np.array([sample_dirichlet([5.0, 5.0], rng) for _ in range(100_000)])
    np.testing.assert_allclose(w.mean(axis=0), [0.5, 0.5], atol=0.01)


def test_dirichlet_block_matches_moments(rng):
    w = sample_dirichlet([2.0, 3.0, 5.0], rng, size=50_000)
    assert w.shape == (50_000, 3)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(w.mean(axis=0), [0.2, 0.3, 0.5], atol=0.005)


def test_dirichlet_deterministic():
    a = sample_dirichlet([0.5, 2.0, 30.0], RngStream(7, 3))
    b = sample_dirichlet([0.5, 2.0, 30.0], RngStream(7, 3))
    np.testing.assert_array_equal(a, b)
    c = sample_dirichlet([0.5, 2.0, 30.0], RngStream(7, 4))
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("alphas", [[1.0, 0.0], [-1.0, 2.0], []])
def test_dirichlet_rejects_bad_alphas(alphas, rng):
    with pytest.raises(DomainError):
        sample_dirichlet(alphas, rng)


def test_dirichlet_simplex_for_random_alphas():
    gen = np.random.default_rng(11)
    rng = RngStream(11, 1)
    for _ in range(10_000):
        k = gen.integers(1, 8)
        alphas = np.exp(gen.uniform(math.log(1e-3), math.log(1e3), size=k))
        w = sample_dirichlet(alphas, rng)
        assert abs(w.sum() - 1.0) <= 1e-12
        assert np.all(w > 0) and np.all(w <= 1.0)


@pytest.mark.parametrize("alphas", [[0.3, 1.0, 4.0], [0.005, 0.02, 0.05], [200.0, 50.0]])
def test_dirichlet_mean_within_three_se(alphas):
    alphas = np.array(alphas)
    rng = RngStream(99, 0)
    w = np.array([sample_dirichlet(alphas, rng) for _ in range(100_000)])
    a0 = alphas.sum()
    mean = alphas / a0
    sd = np.sqrt(mean * (1 - mean) / (a0 + 1))
    se = sd / np.sqrt(len(w))
    assert np.all(np.abs(w.mean(axis=0) - mean) <= 3 * se)


def test_dataset_validation():
    with pytest.raises(DomainError):
        AggregatedDataset([])
    with pytest.raises(DomainError):
        AggregatedDataset([BucketRecord(1, 2, 3.0), BucketRecord(1, 2, 3.0)])
    with pytest.raises(DomainError):
        BucketRecord(1, 0, 3.0)
    with pytest.raises(DomainError):
        BucketRecord(1, 2, float("inf"))
    d = AggregatedDataset.from_arrays([10.0, 20.0], [2, 4])
    assert d.K == 2
    np.testing.assert_array_equal(d.xbar, [5.0, 5.0])
    np.testing.assert_array_equal(d.offsets, [0, 2, 6])


def test_prior_validation():
    with pytest.raises(DomainError):
        NormalGammaPrior(a=0.0)
    with pytest.raises(DomainError):
        NormalGammaPrior(tau0=-1.0)
