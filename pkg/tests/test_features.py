import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from sepkit import distributions as dist
from sepkit import features as feat
from sepkit import specfun


def test_init_hidden_variance_and_determinism():
    layer = feat.init_hidden(10, 100_000, seed=1)
    vals = np.concatenate([layer.U.ravel(), layer.b])
    k = vals.size
    se = 0.25 * math.sqrt(2 / k)
    assert abs(vals.var() - 0.25) < 5 * se
    again = feat.init_hidden(10, 100_000, seed=1)
    assert np.array_equal(layer.U, again.U) and np.array_equal(layer.b, again.b)
    other = feat.init_hidden(10, 100_000, seed=2)
    assert np.mean(layer.U != other.U) >= 0.99


def test_hidden_layer_is_read_only_and_serializes():
    layer = feat.init_hidden(3, 8, seed=4)
    with pytest.raises(ValueError):
        layer.U[0, 0] = 1.0
    back = feat.HiddenLayer.from_json(layer.to_json())
    assert np.array_equal(back.U, layer.U)
    assert "U" not in layer.to_json()


def test_init_output_norm_frequency():
    r = 64
    hits = sum(np.sum(feat.init_output(r, s) ** 2) < 2 / r for s in range(1000))
    assert hits / 1000 >= 1 - 1.2 ** -r


def test_init_output_mean_and_scale():
    W = np.array([feat.init_output(4, s) for s in range(100_000)])
    se = W.std(axis=0) / math.sqrt(W.shape[0])
    assert np.all(np.abs(W.mean(axis=0)) < 5 * se)
    assert abs(W.var() - 1 / 16) < 0.002
    w1 = np.array([feat.init_output(1, s)[0] for s in range(20_000)])
    assert stats.kstest(w1, "norm").pvalue > 1e-3


def test_feature_map_examples():
    layer = feat.init_hidden(4, 6, seed=0)
    F = feat.feature_map(layer, np.zeros((2, 4)))
    assert np.allclose(F, specfun.erf(layer.b)[None, :])
    one = feat.HiddenLayer(np.eye(3)[:1], np.zeros(1), 0)
    assert feat.feature_map(one, [[1.0, 0.0, 0.0]])[0, 0] == pytest.approx(math.erf(1.0))
    with pytest.raises(feat.DimensionMismatchError):
        feat.feature_map(layer, np.zeros((2, 3)))


@pytest.mark.parametrize("dtype", [np.float64, np.float32])
def test_feature_map_open_interval(dtype):
    layer = feat.init_hidden(3, 50, seed=0)
    X = np.vstack([np.full((1, 3), 100.0), np.full((1, 3), -100.0), np.random.default_rng(0).normal(size=(200, 3))])
    F = feat.feature_map(layer, X, dtype=dtype)
    assert F.dtype == dtype
    assert np.all(np.abs(F) < 1)
    assert np.all(np.linalg.norm(F, axis=1) <= math.sqrt(layer.r))


def test_conditional_density_examples():
    z = np.linspace(-0.99, 0.99, 41)
    assert np.allclose(feat.conditional_feature_density(z, 1.0), 0.5, atol=1e-15)
    assert np.allclose(feat.conditional_feature_density(z, 2.3), feat.conditional_feature_density(-z, 2.3))
    h = 1e-6
    fd = (feat.conditional_feature_cdf(0.3 + h, 2.0) - feat.conditional_feature_cdf(0.3 - h, 2.0)) / (2 * h)
    assert feat.conditional_feature_density(0.3, 2.0) == pytest.approx(fd, rel=1e-6)
    with pytest.raises(specfun.DomainError):
        feat.conditional_feature_density(1.0, 1.0)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@pytest.mark.parametrize("x", [0.0, 0.5, 1.0, 2.0, 5.0])
def test_conditional_density_integrates_to_one(x):
    # substitute z = erf(q) to remove the endpoint singularity
    f = lambda q: feat.conditional_feature_density(math.erf(q), x) * 2 / math.sqrt(math.pi) * math.exp(-q * q)  # noqa: E731
    total, _ = integrate.quad(f, -5.5, 5.5, limit=200, epsabs=1e-10)
    # the preactivation is N(0, (1 + x^2)/4); add its mass beyond +-5.5
    tail = 2 * stats.norm.sf(5.5 / (0.5 * math.sqrt(1 + x * x)))
    assert abs(total + tail - 1) < 1e-6


def test_conditional_cdf_properties():
    assert feat.conditional_feature_cdf(0.0, 3.0) == 0.5
    z = np.linspace(-0.999, 0.999, 501)
    assert np.allclose(feat.conditional_feature_cdf(z, 1.0), 0.5 + 0.5 * z, atol=1e-12)
    c = feat.conditional_feature_cdf(z, 2.0)
    assert np.all(np.diff(c) > 0)
    assert feat.conditional_feature_cdf(-1 + 1e-15, 2.0) < 1e-3
    assert feat.conditional_feature_cdf(1 - 1e-15, 2.0) > 1 - 1e-3


@pytest.mark.parametrize("x", [1.0, 2.0])
def test_feature_ks_fit(x):
    # fresh neuron per sample so the features are i.i.d. draws of one law
    n, d = 100_000, 5
    rng = np.random.default_rng(3)
    X = dist.sample_on_sphere(d, n, x, seed=4)
    U = rng.normal(0, 0.5, (n, d))
    b = rng.normal(0, 0.5, n)
    z = specfun.erf(np.sum(U * X, axis=1) + b)
    ks = stats.kstest(z, lambda t: feat.conditional_feature_cdf(np.clip(t, -1 + 1e-16, 1 - 1e-16), x))
    assert ks.statistic < 0.01


def test_preactivation_variance_law():
    n, d, x = 100_000, 5, 1.7
    rng = np.random.default_rng(8)
    X = dist.sample_on_sphere(d, n, x, seed=9)
    pre = np.sum(rng.normal(0, 0.5, (n, d)) * X, axis=1) + rng.normal(0, 0.5, n)
    v = feat.preactivation_variance(x)
    assert v == pytest.approx(0.25 * (1 + x * x))
    assert abs(pre.var() - v) < 5 * v * math.sqrt(2 / n)


def test_features_uncorrelated_at_fixed_norm():
    n, d = 100_000, 5
    rng = np.random.default_rng(1)
    X = dist.sample_on_sphere(d, n, 1.3, seed=2)
    z1 = specfun.erf(np.sum(rng.normal(0, 0.5, (n, d)) * X, axis=1) + rng.normal(0, 0.5, n))
    z2 = specfun.erf(np.sum(rng.normal(0, 0.5, (n, d)) * X, axis=1) + rng.normal(0, 0.5, n))
    assert abs(np.corrcoef(z1, z2)[0, 1]) < 5 / math.sqrt(n)


def test_density_non_increasing_in_norm_near_zero():
    z = np.linspace(-1 / 9, 1 / 9, 100)
    x = np.linspace(0, 5, 100)
    g = feat.conditional_feature_density(z[None, :], x[:, None])
    assert np.max(np.diff(g, axis=0)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.999, 0.999), st.floats(0, 10))
def test_density_symmetric_and_positive(z, x):
    a = feat.conditional_feature_density(z, x)
    assert a > 0
    assert a == pytest.approx(feat.conditional_feature_density(-z, x), rel=1e-12)


def test_orthonormal_pair():
    e1, e2 = feat.orthonormal_pair([1.0, 1.0, 0.0], [1.0, 0.0, 0.0])
    assert abs(e1 @ e2) < 1e-15
    assert np.linalg.norm(e1) == pytest.approx(1) and np.linalg.norm(e2) == pytest.approx(1)
    with pytest.raises(feat.DegenerateSpanError):
        feat.orthonormal_pair([1.0, 2.0], [2.0, 4.0])
    with pytest.raises(feat.DegenerateSpanError):
        feat.orthonormal_pair([0.0, 0.0], [1.0, 0.0])


def test_marginal_density_positive_and_stable():
    n, d, r = 1_000_000, 5, 50
    layer = feat.init_hidden(d, r, seed=0)
    ds = dist.sample_sphere_sum(d, n, 1.5, seed=1)
    F = feat.feature_map(layer, ds.X, dtype=np.float32)
    rng = np.random.default_rng(2)
    est = [feat.marginal_density_estimate(F, rng.standard_normal(r), rng.standard_normal(r)) for _ in range(2)]
    mins = [e.min_inner_density for e in est]
    assert min(mins) > 0
    assert max(mins) / min(mins) < 3
    mass = est[0].density.sum() * (est[0].edges[1] - est[0].edges[0]) ** 2
    assert 0 < mass <= 1 + 1e-12


def test_marginal_density_rejects_empty():
    with pytest.raises(ValueError):
        feat.marginal_density_estimate(np.empty((0, 4)), np.ones(4), np.arange(4.0))
