import numpy as np
import pytest

from seqdss import expfam
from seqdss.diagnostic import (
    Belief,
    DssState,
    HypothesisSet,
    bayes_update_direct,
    build_diagnostic,
    dss_update,
    normal_zeta_values,
    reconstruct_belief,
)
from seqdss.errors import DuplicateHypothesis

from conftest import distinct_alphas, make_spec


def example1_hypotheses():
    spec = expfam.family("normal")
    return HypothesisSet.from_params(
        spec,
        alphas=[[45.0, 25.0], [55.0, 25.0], [60.0, 25.0]],
        prior=[1 / 3, 1 / 3, 1 / 3],
        loss=[[0, 2, 5], [3, 0, 6], [4, 7, 0]],
        obs_cost=[0.5, 0.2, 0.3],
    )


def fold_direct(hs, observations):
    belief = Belief(pi=hs.prior)
    for y in observations:
        belief = bayes_update_direct(hs, belief, y)
    return belief


def fold_dss(fac, hs, observations):
    state = DssState.initial(fac.rank)
    for y in observations:
        state = dss_update(fac, hs.spec, state, y)
    return state


class TestBuildDiagnostic:
    def test_equal_variance_normal_means(self):
        hs = example1_hypotheses()
        fac = build_diagnostic(hs)
        np.testing.assert_allclose(fac.H, [[0.4, 0.0], [0.6, 0.0]], atol=1e-15)
        assert fac.rank == 1

    def test_collinear_mean_variance_case(self):
        spec = expfam.family("normal")
        hs = HypothesisSet.from_params(
            spec,
            alphas=[[0.0, 1.0], [1.0, 2.0], [2.0, 3.0], [3.0, 4.0]],
            prior=[0.25] * 4,
            loss=np.ones((4, 4)) - np.eye(4),
            obs_cost=[0.1] * 4,
        )
        fac = build_diagnostic(hs)
        assert fac.rank == 1
        zeta = normal_zeta_values(hs)
        np.testing.assert_allclose(zeta, [1.0, 1.0, 1.0], atol=1e-12)
        # projection direction is (1, 1/2) up to scale
        u = fac.U[0] / fac.U[0, 0]
        np.testing.assert_allclose(u, [1.0, 0.5], atol=1e-12)
        # increment for y = 2 is then y + y^2/2 = 4 up to the same scale
        state = dss_update(fac, spec, DssState.initial(1), 2.0)
        assert state.x[0] / fac.U[0, 0] == pytest.approx(4.0, abs=1e-12)

    def test_distinct_zeta_case_is_rank_two(self):
        spec = expfam.family("normal")
        hs = HypothesisSet.from_params(
            spec,
            alphas=[[0.0, 1.0], [1.0, 1.5], [0.5, 3.0]],
            prior=[1 / 3, 1 / 3, 1 / 3],
            loss=np.ones((3, 3)) - np.eye(3),
            obs_cost=[0.1] * 3,
        )
        fac = build_diagnostic(hs)
        assert fac.rank == 2
        zeta = normal_zeta_values(hs)
        assert abs(zeta[0] - zeta[1]) > 1e-6

    def test_factorization_residual(self):
        rng = np.random.default_rng(5)
        for family_id in ("normal", "gamma", "beta", "lognormal"):
            spec = make_spec(rng, family_id)
            alphas = distinct_alphas(rng, spec, 6)
            hs = HypothesisSet.from_params(
                spec, alphas, prior=np.full(6, 1 / 6),
                loss=np.ones((6, 6)) - np.eye(6), obs_cost=np.full(6, 0.1))
            fac = build_diagnostic(hs)
            assert np.max(np.abs(fac.L @ fac.U - fac.H)) <= 1e-9 * max(1.0, np.abs(fac.H).max())
            assert fac.rank <= min(hs.n_hyp - 1, spec.M)

    def test_duplicate_hypothesis_rejected(self):
        spec = expfam.family("normal")
        with pytest.raises(DuplicateHypothesis):
            HypothesisSet.from_params(
                spec,
                alphas=[[0.0, 1.0], [0.0, 1.0], [1.0, 1.0]],
                prior=[1 / 3, 1 / 3, 1 / 3],
                loss=np.ones((3, 3)) - np.eye(3),
                obs_cost=[0.1] * 3,
            )

    def test_zero_prior_rejected(self):
        spec = expfam.family("normal")
        with pytest.raises(ValueError, match="strictly positive"):
            HypothesisSet.from_params(
                spec,
                alphas=[[0.0, 1.0], [1.0, 1.0]],
                prior=[0.0, 1.0],
                loss=[[0, 1], [1, 0]],
                obs_cost=[0.1, 0.1],
            )


class TestDssUpdate:
    def test_example1_path(self):
        hs = example1_hypotheses()
        fac = build_diagnostic(hs)
        state = DssState.initial(fac.rank)
        xs = []
        for y in (58.0, 52.0, 41.0, 57.0):
            state = dss_update(fac, hs.spec, state, y)
            xs.append(state.x[0])
        np.testing.assert_allclose(xs, [58.0, 110.0, 151.0, 208.0], atol=1e-12)
        assert state.k == 4

    def test_order_invariance(self):
        hs = example1_hypotheses()
        fac = build_diagnostic(hs)
        obs = [58.0, 52.0, 41.0, 57.0]
        a = fold_dss(fac, hs, obs)
        b = fold_dss(fac, hs, obs[::-1])
        np.testing.assert_allclose(a.x, b.x, atol=1e-10)
        pa = reconstruct_belief(fac, hs, a).pi
        pb = reconstruct_belief(fac, hs, b).pi
        np.testing.assert_allclose(pa, pb, atol=1e-12)


class TestReconstruct:
    def test_example1_belief_sequence(self):
        hs = example1_hypotheses()
        fac = build_diagnostic(hs)
        expected = [
            (0.019, 0.466, 0.515),
            (0.013, 0.721, 0.266),
            (0.399, 0.593, 0.008),
            (0.039, 0.949, 0.012),
        ]
        state = DssState.initial(fac.rank)
        for y, exp in zip((58.0, 52.0, 41.0, 57.0), expected):
            state = dss_update(fac, hs.spec, state, y)
            pi = reconstruct_belief(fac, hs, state).pi
            np.testing.assert_allclose(pi, exp, atol=1e-3)

    def test_stage_zero_returns_prior(self):
        hs = example1_hypotheses()
        fac = build_diagnostic(hs)
        pi = reconstruct_belief(fac, hs, DssState.initial(fac.rank)).pi
        np.testing.assert_allclose(pi, hs.prior, atol=1e-15)

    def test_matches_direct_recursion_randomized(self):
        rng = np.random.default_rng(314159)
        families = ("normal", "poisson", "gamma", "beta", "exponential",
                    "geometric", "lognormal", "rayleigh")
        worst = 0.0
        for trial in range(200):
            family_id = families[trial % len(families)]
            spec = make_spec(rng, family_id)
            n1 = int(rng.integers(2, 11))
            alphas = distinct_alphas(rng, spec, n1)
            prior = rng.dirichlet(np.full(n1, 2.0))
            prior = np.maximum(prior, 1e-4)
            prior = prior / prior.sum()
            hs = HypothesisSet.from_params(
                spec, alphas, prior,
                loss=np.ones((n1, n1)) - np.eye(n1), obs_cost=np.full(n1, 0.1))
            fac = build_diagnostic(hs)
            truth = int(rng.integers(0, n1))
            k = int(rng.integers(1, 51))
            obs = expfam.sample(spec, hs.naturals[truth], rng, k)
            direct = fold_direct(hs, obs).pi
            recon = reconstruct_belief(fac, hs, fold_dss(fac, hs, obs)).pi
            worst = max(worst, np.max(np.abs(direct - recon)))
            assert np.all(recon >= 0.0)
            assert abs(recon.sum() - 1.0) <= 1e-12
        assert worst <= 1e-9

    def test_relabeling_equivariance(self):
        rng = np.random.default_rng(99)
        hs = example1_hypotheses()
        fac = build_diagnostic(hs)
        perm = np.array([0, 2, 1])
        hsp = hs.relabeled(perm)
        facp = build_diagnostic(hsp)
        obs = expfam.sample(hs.spec, hs.naturals[1], rng, 12)
        pi = reconstruct_belief(fac, hs, fold_dss(fac, hs, obs)).pi
        pip = reconstruct_belief(facp, hsp, fold_dss(facp, hsp, obs)).pi
        np.testing.assert_allclose(pip, pi[perm], atol=1e-12)


class TestDirectUpdate:
    def test_degenerate_belief_absorbs(self):
        hs = example1_hypotheses()
        belief = Belief(pi=np.array([0.0, 1.0, 0.0]))
        out = bayes_update_direct(hs, belief, 41.0)
        np.testing.assert_allclose(out.pi, [0.0, 1.0, 0.0], atol=1e-300)

    def test_example1_final_belief(self):
        hs = example1_hypotheses()
        pi = fold_direct(hs, [58.0, 52.0, 41.0, 57.0]).pi
        np.testing.assert_allclose(pi, [0.039, 0.949, 0.012], atol=1e-3)

    def test_equal_likelihood_preserves_ratio(self):
        spec = expfam.family("normal")
        hs = HypothesisSet.from_params(
            spec,
            alphas=[[-1.0, 1.0], [1.0, 1.0]],
            prior=[0.5, 0.5],
            loss=[[0, 1], [1, 0]],
            obs_cost=[0.1, 0.1],
        )
        out = bayes_update_direct(hs, Belief(pi=hs.prior), 0.0)
        assert out.pi[0] == pytest.approx(out.pi[1], abs=1e-14)
