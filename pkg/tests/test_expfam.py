import math

import numpy as np
import pytest

from seqdss import expfam
from seqdss.errors import InadmissibleParameter, OutOfSupport, UnsupportedFamily

from conftest import make_spec, random_alpha, scipy_logpdf


def test_to_natural_normal_hand_checked():
    spec = expfam.family("normal")
    th = expfam.to_natural(spec, [45.0, 25.0])
    np.testing.assert_allclose(th.eta, [1.8, -0.02], rtol=0, atol=1e-15)
    assert th.logB == pytest.approx(40.5 + 0.5 * math.log(25.0), abs=1e-13)


def test_to_natural_poisson_unit_rate():
    th = expfam.to_natural(expfam.family("poisson"), [1.0])
    assert th.eta[0] == 0.0
    assert th.logB == 1.0


def test_to_natural_exponential():
    th = expfam.to_natural(expfam.family("exponential"), [2.0])
    assert th.eta[0] == -2.0
    assert th.logB == pytest.approx(-math.log(2.0), abs=1e-15)


@pytest.mark.parametrize("family_id,alpha", [
    ("normal", [1.0, 0.0]),
    ("normal", [1.0, -2.0]),
    ("poisson", [0.0]),
    ("binomial", [1.0]),
    ("beta", [-1.0, 2.0]),
    ("exponential", [-3.0]),
])
def test_inadmissible_parameters_rejected(family_id, alpha):
    spec = expfam.family(family_id, n=5) if family_id == "binomial" else expfam.family(family_id)
    with pytest.raises(InadmissibleParameter):
        expfam.to_natural(spec, alpha)


def test_unknown_family_rejected():
    with pytest.raises(UnsupportedFamily):
        expfam.family("cauchy")


def test_suff_stat_examples():
    np.testing.assert_allclose(
        expfam.suff_stat(expfam.family("normal"), 58.0), [58.0, 3364.0])
    np.testing.assert_allclose(
        expfam.suff_stat(expfam.family("poisson"), 0.0), [0.0])
    np.testing.assert_allclose(
        expfam.suff_stat(expfam.family("beta"), 0.5),
        [math.log(0.5), math.log(0.5)], atol=1e-15)


def test_suff_stat_vectorized_shape():
    spec = expfam.family("normal")
    t = expfam.suff_stat(spec, np.array([1.0, 2.0, 3.0]))
    assert t.shape == (3, 2)
    np.testing.assert_allclose(t[:, 1], [1.0, 4.0, 9.0])


@pytest.mark.parametrize("family_id,y", [
    ("poisson", 1.5),
    ("poisson", -1.0),
    ("beta", 0.0),
    ("beta", 1.2),
    ("exponential", -0.5),
    ("binomial", 7.0),
])
def test_out_of_support_rejected(family_id, y):
    spec = expfam.family(family_id, n=5) if family_id == "binomial" else expfam.family(family_id)
    with pytest.raises(OutOfSupport):
        expfam.suff_stat(spec, y)


def test_log_density_normal_at_mean():
    spec = expfam.family("normal")
    th = expfam.to_natural(spec, [45.0, 25.0])
    assert expfam.log_density(spec, th, 45.0) == pytest.approx(
        math.log(1.0 / math.sqrt(50.0 * math.pi)), abs=1e-13)


def test_log_density_poisson_one():
    spec = expfam.family("poisson")
    th = expfam.to_natural(spec, [1.0])
    assert expfam.log_density(spec, th, 1.0) == pytest.approx(-1.0, abs=1e-13)


def test_log_density_binomial():
    spec = expfam.family("binomial", n=2)
    th = expfam.to_natural(spec, [0.5])
    assert expfam.log_density(spec, th, 1.0) == pytest.approx(math.log(0.5), abs=1e-13)


def test_density_identity_against_closed_forms():
    # exp(log_density) must reproduce the textbook density for every family
    rng = np.random.default_rng(90210)
    pairs_per_family = 10_000
    n_alpha = 250
    for family_id in expfam.FAMILY_IDS:
        spec = make_spec(rng, family_id)
        worst = 0.0
        for _ in range(n_alpha):
            alpha = random_alpha(rng, family_id)
            th = expfam.to_natural(spec, alpha)
            ys = expfam.sample(spec, th, rng, pairs_per_family // n_alpha)
            ours = expfam.log_density(spec, th, ys)
            ref = scipy_logpdf(spec, alpha, ys)
            worst = max(worst, np.max(np.abs(ours - ref)))
        assert worst <= 1e-10, f"{family_id}: log-density mismatch {worst:.3e}"


def test_likelihood_ratio_identity():
    # log f(y;a1) - log f(y;a0) == (eta1-eta0).t(y) - (B1-B0)
    rng = np.random.default_rng(4711)
    for family_id in expfam.FAMILY_IDS:
        spec = make_spec(rng, family_id)
        for _ in range(50):
            a0 = random_alpha(rng, family_id)
            a1 = random_alpha(rng, family_id)
            th0 = expfam.to_natural(spec, a0)
            th1 = expfam.to_natural(spec, a1)
            ys = expfam.sample(spec, th0, rng, 20)
            lhs = expfam.log_density(spec, th1, ys) - expfam.log_density(spec, th0, ys)
            t = expfam.suff_stat(spec, ys)
            rhs = t @ (th1.eta - th0.eta) - (th1.logB - th0.logB)
            np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_sample_determinism():
    spec = expfam.family("normal")
    th = expfam.to_natural(spec, [0.0, 1.0])
    a = expfam.sample(spec, th, np.random.default_rng(7), 100)
    b = expfam.sample(spec, th, np.random.default_rng(7), 100)
    np.testing.assert_array_equal(a, b)


def test_sample_normal_mean():
    spec = expfam.family("normal")
    th = expfam.to_natural(spec, [0.0, 1.0])
    ys = expfam.sample(spec, th, np.random.default_rng(11), 10**6)
    assert abs(ys.mean()) < 0.005


def test_sample_poisson_variance():
    spec = expfam.family("poisson")
    th = expfam.to_natural(spec, [4.0])
    ys = expfam.sample(spec, th, np.random.default_rng(13), 10**6)
    assert abs(ys.var() - 4.0) < 0.05


def test_hermite_rule_moments():
    spec = expfam.family("normal")
    th = expfam.to_natural(spec, [0.0, 1.0])
    nodes, w = expfam.integration_rule(spec, th, 16)
    assert abs(w.sum() - 1.0) <= 1e-12
    assert abs(w @ nodes) <= 1e-12
    assert abs(w @ nodes**2 - 1.0) <= 1e-10


def test_poisson_rule_is_tail_truncated_enumeration():
    spec = expfam.family("poisson")
    th = expfam.to_natural(spec, [1.0])
    nodes, w = expfam.integration_rule(spec, th, 16)
    assert np.all(nodes == np.round(nodes))
    assert abs(w.sum() - 1.0) <= 1e-10
    # mass beyond the largest node
    from scipy import stats
    assert stats.poisson(1.0).sf(nodes.max()) < 1e-12


def test_rule_unit_mass_and_t_mean_all_families():
    rng = np.random.default_rng(2718)
    for family_id in expfam.FAMILY_IDS:
        spec = make_spec(rng, family_id)
        alpha = random_alpha(rng, family_id)
        th = expfam.to_natural(spec, alpha)
        nodes, w = expfam.integration_rule(spec, th, 64)
        assert abs(w.sum() - 1.0) <= 1e-10, family_id
        t_mean_rule = w @ expfam.suff_stat(spec, nodes)
        draws = expfam.sample(spec, th, rng, 200_000)
        t_draws = expfam.suff_stat(spec, draws)
        mc = t_draws.mean(axis=0)
        sd = t_draws.std(axis=0) / math.sqrt(len(draws))
        tol = np.maximum(6 * sd, 5e-3)
        assert np.all(np.abs(t_mean_rule - mc) <= tol), (
            f"{family_id}: quadrature t-mean {t_mean_rule} vs Monte Carlo {mc}")


def test_rule_rejects_bad_node_count():
    spec = expfam.family("normal")
    th = expfam.to_natural(spec, [0.0, 1.0])
    with pytest.raises(ValueError):
        expfam.integration_rule(spec, th, 0)
