import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sspolya.dyadic import count_data
from sspolya.haar import HistogramDensity, haar_analyze
from sspolya.special import reg_inc_beta
from sspolya.sspt import (
    DEFAULT_KAPPA,
    NodePosterior,
    PosteriorTree,
    PriorSpec,
    coeffs_from_splits,
    default_l0,
    draw,
    draw_splits,
    fit,
    fit_counts,
    heights_from_splits,
    kappa_theory,
    log_bayes_factor,
    mean_density,
    median_density,
    node_median,
    posterior_slab_weight,
    sample_densities,
    sample_density,
)


def half_root_prior():
    # kappa = 0 with the normalized schedule gives pi_l = 1 / (L + 1)
    return PriorSpec(L=1, a=1, kappa=0.0, l0=0)


def spike_only(post):
    """Copy of ``post`` with every slab weight forced to zero."""
    zeros = [np.zeros_like(p) for p in post.pi_tilde]
    return PosteriorTree(post.prior, post.n0, post.n1, zeros, post.n)


class TestPriorSpec:
    def test_root_half(self):
        assert half_root_prior().slab_weights()[0] == 0.5

    def test_schedules(self):
        L = 6
        l = np.arange(L)
        exp = PriorSpec(L=L, schedule="exponential").slab_weights()
        np.testing.assert_allclose(exp, np.exp(-DEFAULT_KAPPA * l))
        norm = PriorSpec(L=L).slab_weights()
        np.testing.assert_allclose(norm, exp / np.exp(-DEFAULT_KAPPA * np.arange(L + 1)).sum())
        lll = PriorSpec(L=L, kappa=1.0, schedule="l-log-l").slab_weights()
        assert lll[0] == lll[1] == 1.0
        assert lll[3] == pytest.approx(math.exp(-3 * math.log(3)))

    def test_flat_initialisation(self):
        pi = PriorSpec(L=8, l0=3).slab_weights()
        assert np.all(pi[:4] == 1.0)
        assert np.all(pi[4:] < 1.0)

    def test_default_l0(self):
        n = 2**15
        assert default_l0(n) == round(math.log(n) / math.log(math.log(n)))
        assert default_l0(n, 2) == 2
        assert default_l0(2) == 1

    def test_for_sample_auto(self):
        p = PriorSpec.for_sample(2**15)
        assert (p.L, p.l0) == (8, default_l0(2**15))
        assert PriorSpec.for_sample(2**15, l0=0).l0 == 0

    @pytest.mark.parametrize(
        "kw", [{"a": 0}, {"a": 1.5}, {"kappa": -1.0}, {"l0": 9}, {"schedule": "linear"}, {"L": -1}]
    )
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            PriorSpec(**{"L": 4, **kw})


class TestBayesFactor:
    @pytest.mark.parametrize(
        "n0, n1, expected", [(0, 0, 0.0), (1, 1, math.log(2 / 3)), (2, 0, math.log(4 / 3))]
    )
    def test_examples(self, n0, n1, expected):
        assert log_bayes_factor(n0, n1, 1) == pytest.approx(expected, abs=1e-12)

    def test_no_overflow_at_large_n(self):
        assert np.isfinite(log_bayes_factor(60_000, 40_000, 2))

    def test_balanced_and_skewed(self):
        for n in range(1, 201):
            assert log_bayes_factor(n, 0, 1) >= 0.0
            if n % 2 == 0:
                assert log_bayes_factor(n // 2, n // 2, 1) < 0.0

    def test_negative_counts(self):
        with pytest.raises(ValueError):
            log_bayes_factor(-1, 2, 1)


class TestSlabWeight:
    @given(st.floats(-50, 50))
    def test_pi_one_and_zero_are_exact(self, logT):
        assert posterior_slab_weight(1.0, logT) == 1.0
        assert posterior_slab_weight(0.0, logT) == 0.0

    @pytest.mark.parametrize("T, expected", [(2 / 3, 0.4), (4 / 3, 4 / 7)])
    def test_examples(self, T, expected):
        assert posterior_slab_weight(0.5, math.log(T)) == pytest.approx(expected, abs=1e-12)

    def test_monotone_in_T(self):
        logT = np.linspace(-20, 20, 401)
        for pi in (0.01, 0.3, 0.9):
            out = posterior_slab_weight(np.full_like(logT, pi), logT)
            assert np.all(np.diff(out) > 0)

    def test_extreme_evidence(self):
        assert posterior_slab_weight(0.5, 800.0) == 1.0
        assert posterior_slab_weight(0.5, -800.0) == 0.0

    def test_bad_pi(self):
        with pytest.raises(ValueError):
            posterior_slab_weight(1.5, 0.0)


class TestFit:
    def test_balanced_pair(self):
        post = fit([0.1, 0.6], half_root_prior())
        node = post.node(0, 0)
        assert node.pi_tilde == pytest.approx(0.4, abs=1e-12)
        assert (node.alpha0X, node.alpha1X) == (2.0, 2.0)

    def test_skewed_pair(self):
        post = fit([0.1, 0.2], half_root_prior())
        assert post.node(0, 0).pi_tilde == pytest.approx(4 / 7, abs=1e-12)

    def test_flat_prior_reduces_to_classical_tree(self):
        rng = np.random.default_rng(0)
        x = rng.beta(2, 5, size=300)
        post = fit(x, PriorSpec(L=5, l0=5, a=2))
        assert all(np.all(p == 1.0) for p in post.pi_tilde)
        counts = count_data(x, 5)
        for l in range(5):
            left, right = counts.children_counts(l)
            np.testing.assert_allclose(post.split_means()[l], (left + 2) / (left + right + 4))

    def test_empty(self):
        with pytest.raises(ValueError):
            fit([])

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            fit([0.2, 1.2])

    def test_default_prior(self):
        post = fit(np.linspace(0.001, 1, 1000))
        assert post.L == 5 and post.n == 1000

    def test_order_invariant(self):
        rng = np.random.default_rng(1)
        x = rng.random(500)
        p1 = fit(x).to_dict()
        p2 = fit(rng.permutation(x)).to_dict()
        assert p1 == p2

    def test_shallow_counts_rejected(self):
        with pytest.raises(ValueError):
            fit_counts(count_data([0.5], 2), PriorSpec(L=3))


class TestSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(2)
        post = fit(rng.random(400))
        back = PosteriorTree.from_json(post.to_json())
        assert back.to_dict() == post.to_dict()
        assert back.prior == post.prior

    def test_version_check(self):
        doc = fit([0.3, 0.6]).to_dict()
        doc["schema_version"] = 99
        with pytest.raises(ValueError):
            PosteriorTree.from_dict(doc)


class TestSampling:
    def test_spike_only_is_uniform(self):
        post = spike_only(fit(np.random.default_rng(0).random(200)))
        h = sample_densities(post, 20, np.random.default_rng(1))
        assert np.all(h == 1.0)

    def test_draws_integrate_to_one(self):
        post = fit(np.random.default_rng(3).beta(0.5, 2, size=3000))
        h = sample_densities(post, 200, 11)
        masses = h.sum(axis=1) * 2.0**-post.L
        assert np.abs(masses - 1).max() <= 1e-12

    def test_fixed_seed_reproducible(self):
        post = fit(np.random.default_rng(4).random(800))
        a = sample_density(post, np.random.default_rng(5)).heights
        b = sample_density(post, np.random.default_rng(5)).heights
        assert a.tobytes() == b.tobytes()
        h1, c1 = draw(post, 10, np.random.SeedSequence(9))
        h2, c2 = draw(post, 10, 9)
        assert h1.tobytes() == h2.tobytes()

    def test_coefficients_match_heights(self):
        post = fit(np.random.default_rng(6).random(2000))
        h, coeffs = draw(post, 3, 0)
        for i in range(3):
            w = haar_analyze(HistogramDensity(h[i]))
            for l in range(post.L):
                assert np.abs(w.coeffs[l] - coeffs[l][i]).max() <= 1e-12

    def test_moments_match_split_means(self):
        post = fit(np.random.default_rng(8).beta(2, 2, size=500), PriorSpec(L=3, l0=1))
        splits = draw_splits(post, 40_000, 12)
        for l, m in enumerate(post.split_means()):
            assert np.abs(splits[l].mean(axis=0) - m).max() < 0.01


class TestMeanDensity:
    def test_spike_only_is_uniform(self):
        post = spike_only(fit([0.2, 0.3, 0.9]))
        np.testing.assert_array_equal(mean_density(post).heights, np.ones(1 << post.L))

    def test_root_only(self):
        post = fit([0.1, 0.2], half_root_prior())
        np.testing.assert_allclose(mean_density(post).heights, [9 / 7, 5 / 7], atol=1e-12)

    def test_integrates_to_one(self):
        post = fit(np.random.default_rng(0).beta(3, 1, size=5000))
        assert abs(mean_density(post).integral() - 1) <= 1e-12


class TestMedian:
    def test_pure_spike(self):
        assert node_median(NodePosterior(0.0, 3, 9)) == 0.5

    def test_symmetric_slab(self):
        assert node_median(NodePosterior(1.0, 4, 4)) == 0.5

    def test_skewed_slab(self):
        assert node_median(NodePosterior(1.0, 2, 1)) == pytest.approx(math.sqrt(0.5), abs=1e-10)

    def test_spike_holds_median(self):
        assert node_median(NodePosterior(0.6, 2, 1)) == 0.5

    @settings(max_examples=200)
    @given(st.floats(0, 1), st.integers(1, 60), st.integers(1, 60))
    def test_generalized_median(self, pi, a0, a1):
        node = NodePosterior(pi, a0, a1)
        m = node_median(node)
        below = pi * reg_inc_beta(m, a0, a1) + (1 - pi) * (1.0 if m > 0.5 else 0.0)
        assert below <= 0.5 + 1e-9
        assert node.cdf(m) >= 0.5 - 1e-9

    def test_median_density_example(self):
        # a lone root split with median 0.7
        splits = [np.array([0.7])]
        np.testing.assert_allclose(heights_from_splits(splits), [1.4, 0.6])
        assert coeffs_from_splits(splits)[0][0] == pytest.approx(-0.4)

    def test_all_half_gives_uniform(self):
        post = spike_only(fit(np.random.default_rng(1).random(100)))
        f, fhat = median_density(post)
        assert np.all(f.heights == 1.0)
        assert fhat.support() == []

    def test_median_density_is_density(self):
        post = fit(np.random.default_rng(2).beta(0.7, 1.3, size=20_000))
        f, fhat = median_density(post)
        assert abs(f.integral() - 1) <= 1e-12
        w = haar_analyze(f)
        assert np.abs(w.flat() - fhat.flat()).max() <= 1e-12


class TestKappaTheory:
    def test_values(self):
        assert kappa_theory(1, 1) == pytest.approx(576 + 5 * math.log(2), abs=1e-9)
        assert kappa_theory(0.5, 1) == pytest.approx(1152 + 5 * math.log(2), abs=1e-9)

    def test_domain(self):
        with pytest.raises(ValueError):
            kappa_theory(0, 1)
