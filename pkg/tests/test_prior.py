"""Analytic mixture prior: density, responsibilities, score, denoiser, Jacobian.

Oracles: direct mixture-density summation (no log-sum-exp), central finite
differences for gradients and Jacobians, and prior-weighted Monte Carlo for
the posterior mean.
"""
import numpy as np
import pytest

from bindsolve.prior import latent_prior, vector_prior
from bindsolve.schedule import build_schedule
from bindsolve.vsa import Codebook, generate_codebooks


def plain_prior(dim=5, size=3, sigma0=0.2, seed=0, temp=1.0):
    cb = generate_codebooks(seed, dim, size, 1)[0]
    return vector_prior(cb, sigma0, temp, normalize_temp=False), cb


def brute_log_density(prior, state, t, sched):
    """Direct summation of the component densities (oracle path)."""
    a = sched.alpha[t]
    w2 = sched.mix_var(t)
    centers = prior.center_matrix()
    dens = 0.0
    for i in range(prior.size):
        diff = state - a * centers[:, i]
        dens += np.exp(-0.5 * diff @ diff / w2) / (
            prior.size * (2 * np.pi * w2) ** (prior.dim / 2))
    return np.log(dens)


class TestLogDensity:
    def test_single_component_is_gaussian(self):
        prior, cb = plain_prior(dim=4, size=1)
        sched = build_schedule(50, sigma0=0.2)
        state = 0.7 * np.ones(4)
        t = 12
        a, w2 = sched.alpha[t], sched.mix_var(t)
        diff = state - a * cb.column(0)
        expected = -0.5 * diff @ diff / w2 - 2 * np.log(2 * np.pi * w2)
        assert np.isclose(prior.log_density(state, t, sched), expected, rtol=1e-12)

    def test_peak_value(self):
        prior, cb = plain_prior(dim=4, size=1)
        sched = build_schedule(50, sigma0=0.2)
        t = 9
        state = sched.alpha[t] * cb.column(0)
        w2 = sched.mix_var(t)
        assert np.isclose(prior.log_density(state, t, sched),
                          -2.0 * np.log(2 * np.pi * w2), rtol=1e-12)

    def test_matches_direct_summation(self):
        prior, _ = plain_prior(dim=5, size=3, sigma0=0.3, seed=4)
        sched = build_schedule(50, sigma0=0.3)
        rng = np.random.default_rng(1)
        for t in (1, 10, 40):
            state = rng.standard_normal(5)
            assert np.isclose(prior.log_density(state, t, sched),
                              brute_log_density(prior, state, t, sched),
                              rtol=1e-10)

    def test_degenerate_width_rejected(self):
        prior, _ = plain_prior(sigma0=0.0)
        sched = build_schedule(50, sigma0=0.0)
        with pytest.raises(ValueError):
            prior.log_density(np.zeros(5), 0, sched)


class TestResponsibilities:
    def test_symmetric_pair(self):
        c = np.ones((4, 1))
        cb = Codebook(entries=np.hstack([c, -c]), scale=1.0)
        prior = vector_prior(cb, 0.1, 1.0, normalize_temp=False)
        sched = build_schedule(50, sigma0=0.1)
        gamma = prior.responsibilities(np.zeros(4), 5, sched)
        np.testing.assert_allclose(gamma, [0.5, 0.5], atol=1e-12)

    def test_single_component(self):
        prior, _ = plain_prior(size=1)
        sched = build_schedule(50, sigma0=0.2)
        gamma = prior.responsibilities(np.ones(5), 3, sched)
        np.testing.assert_allclose(gamma, [1.0])

    def test_matches_direct_ratios(self):
        prior, cb = plain_prior(dim=6, size=4, sigma0=0.25, seed=9)
        sched = build_schedule(50, sigma0=0.25)
        rng = np.random.default_rng(2)
        for t in (2, 20):
            state = rng.standard_normal(6)
            a, w2 = sched.alpha[t], sched.mix_var(t)
            dens = np.array([
                np.exp(-0.5 * np.sum((state - a * cb.column(i)) ** 2) / w2)
                for i in range(4)])
            np.testing.assert_allclose(prior.responsibilities(state, t, sched),
                                       dens / dens.sum(), rtol=1e-9)

    def test_sums_to_one(self):
        prior, _ = plain_prior(dim=8, size=5, temp=3.7)
        sched = build_schedule(50, sigma0=0.2)
        rng = np.random.default_rng(3)
        for _ in range(20):
            gamma = prior.responsibilities(rng.standard_normal(8), 7, sched)
            assert abs(gamma.sum() - 1.0) < 1e-12
            assert np.all(gamma >= 0)


def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestScore:
    def test_single_gaussian_form(self):
        prior, cb = plain_prior(size=1, sigma0=0.2)
        sched = build_schedule(50, sigma0=0.2)
        t = 8
        state = np.linspace(-1, 1, 5)
        a, w2 = sched.alpha[t], sched.mix_var(t)
        np.testing.assert_allclose(prior.score(state, t, sched),
                                   (a * cb.column(0) - state) / w2, rtol=1e-12)

    def test_zero_at_single_mode(self):
        prior, cb = plain_prior(size=1, sigma0=0.2)
        sched = build_schedule(50, sigma0=0.2)
        t = 8
        state = sched.alpha[t] * cb.column(0)
        np.testing.assert_allclose(prior.score(state, t, sched), 0.0, atol=1e-12)

    @pytest.mark.parametrize("temp", [1.0, 3.5])
    def test_is_gradient_of_log_density(self, temp):
        prior, _ = plain_prior(dim=6, size=4, sigma0=0.3, seed=5, temp=temp)
        sched = build_schedule(50, sigma0=0.3)
        rng = np.random.default_rng(4)
        for _ in range(25):
            t = int(rng.integers(1, 50))
            state = rng.standard_normal(6)
            num = fd_gradient(lambda x: prior.log_density(x, t, sched), state)
            ana = prior.score(state, t, sched)
            np.testing.assert_allclose(ana, num, rtol=1e-5, atol=1e-7)

    def test_latent_gradient_consistency(self):
        prior = latent_prior(4, sigma0=0.2, softmax_temp=2.0)
        sched = build_schedule(50, sigma0=0.2)
        rng = np.random.default_rng(8)
        for _ in range(10):
            state = rng.standard_normal(4)
            num = fd_gradient(lambda z: prior.log_density(z, 6, sched), state)
            np.testing.assert_allclose(prior.score(state, 6, sched), num,
                                       rtol=1e-5, atol=1e-7)


class TestDenoise:
    def test_two_forms_agree(self):
        # (x + sigma_t^2 * score) / alpha_t must equal the direct form
        prior, _ = plain_prior(dim=6, size=4, sigma0=0.15, seed=6, temp=2.2)
        sched = build_schedule(50, sigma0=0.15)
        rng = np.random.default_rng(5)
        for t in range(1, 50):
            state = rng.standard_normal(6)
            direct = prior.denoise(state, t, sched)
            via_score = (state + sched.sigma[t] ** 2
                         * prior.score(state, t, sched)) / sched.alpha[t]
            np.testing.assert_allclose(direct, via_score, rtol=1e-9)

    def test_softmax_update_equivalence(self):
        # sigma0 = 0 with equal-norm centers: the denoiser is one softmax
        # update over codebook similarities
        cb = generate_codebooks(11, 16, 6, 1)[0]
        prior = vector_prior(cb, 0.0, softmax_temp=3.0, normalize_temp=False)
        sched = build_schedule(50, sigma0=0.0)
        rng = np.random.default_rng(6)
        for t in (3, 25, 49):
            state = rng.standard_normal(16)
            a, b2 = sched.alpha[t], sched.sigma[t] ** 2
            logits = 3.0 * (a / b2) * (cb.entries.T @ state)
            w = np.exp(logits - logits.max())
            w /= w.sum()
            np.testing.assert_allclose(prior.denoise(state, t, sched),
                                       cb.entries @ w, atol=1e-10)

    def test_saturates_to_nearest_center_at_low_noise(self):
        cb = generate_codebooks(12, 32, 4, 1)[0]
        prior = vector_prior(cb, 0.0, softmax_temp=1.0, normalize_temp=False)
        sched = build_schedule(50, sigma0=0.0)
        state = sched.alpha[1] * cb.column(2) + 0.01
        np.testing.assert_allclose(prior.denoise(state, 1, sched),
                                   cb.column(2), atol=1e-8)

    def test_matches_prior_weighted_monte_carlo(self):
        # E[x0 | xt] estimated by importance weighting prior draws with the
        # forward transition density; independent of the closed form
        prior, cb = plain_prior(dim=4, size=3, sigma0=0.3, seed=13)
        sched = build_schedule(50, sigma0=0.3)
        t = 30
        rng = np.random.default_rng(7)
        state = sched.alpha[t] * cb.column(1) + 0.5 * rng.standard_normal(4)

        n = 200_000
        comps = rng.integers(0, 3, size=n)
        x0 = cb.entries.T[comps] + 0.3 * rng.standard_normal((n, 4))
        resid = state - sched.alpha[t] * x0
        logw = -0.5 * np.sum(resid ** 2, axis=1) / sched.sigma[t] ** 2
        w = np.exp(logw - logw.max())
        w /= w.sum()
        mc = w @ x0
        ess = 1.0 / np.sum(w ** 2)
        mc_se = np.sqrt(np.sum(w[:, None] * (x0 - mc) ** 2, axis=0) / ess)
        ana = prior.denoise(state, t, sched)
        assert np.all(np.abs(ana - mc) < 3 * mc_se + 1e-9)


class TestDenoiseVjp:
    def test_single_component_reduces_to_identity_term(self):
        prior, _ = plain_prior(size=1, sigma0=0.2)
        sched = build_schedule(50, sigma0=0.2)
        t = 10
        v = np.arange(5.0)
        a, w2 = sched.alpha[t], sched.mix_var(t)
        np.testing.assert_allclose(prior.denoise_vjp(np.ones(5), t, sched, v),
                                   (a * 0.2 ** 2 / w2) * v, rtol=1e-12)

    @pytest.mark.parametrize("temp,space", [(1.0, "vector"), (2.7, "vector"),
                                            (1.0, "latent")])
    def test_matches_finite_difference_jacobian(self, temp, space):
        sched = build_schedule(50, sigma0=0.25)
        if space == "vector":
            cb = generate_codebooks(21, 6, 4, 1)[0]
            prior = vector_prior(cb, 0.25, temp, normalize_temp=False)
            dim = 6
        else:
            prior = latent_prior(4, 0.25, temp)
            dim = 4
        rng = np.random.default_rng(9)
        for t in (2, 18, 45):
            state = rng.standard_normal(dim)
            v = rng.standard_normal(dim)
            h = 1e-6
            jtv = np.zeros(dim)
            for i in range(dim):
                e = np.zeros(dim)
                e[i] = h
                jtv[i] = (prior.denoise(state + e, t, sched)
                          - prior.denoise(state - e, t, sched)) @ v / (2 * h)
            ana = prior.denoise_vjp(state, t, sched, v)
            np.testing.assert_allclose(ana, jtv, rtol=1e-4, atol=1e-7)

    def test_saturated_softmax_leaves_identity_term(self):
        cb = generate_codebooks(22, 16, 4, 1)[0]
        prior = vector_prior(cb, 0.2, softmax_temp=5000.0, normalize_temp=False)
        sched = build_schedule(50, sigma0=0.2)
        t = 5
        state = sched.alpha[t] * cb.column(0)
        v = np.random.default_rng(10).standard_normal(16)
        a, w2 = sched.alpha[t], sched.mix_var(t)
        np.testing.assert_allclose(prior.denoise_vjp(state, t, sched, v),
                                   (a * 0.2 ** 2 / w2) * v, atol=1e-8)


class TestLatentPrior:
    def test_uniform_center_mean(self):
        prior = latent_prior(4, 0.1)
        np.testing.assert_allclose(prior.center_mean(), 0.25)

    def test_responsibilities_are_state_softmax(self):
        prior = latent_prior(5, 0.2, softmax_temp=1.5)
        sched = build_schedule(50, sigma0=0.2)
        t = 7
        z = np.random.default_rng(11).standard_normal(5)
        a, w2 = sched.alpha[t], sched.mix_var(t)
        logits = 1.5 * (a * z - 0.5 * a * a) / w2
        w = np.exp(logits - logits.max())
        w /= w.sum()
        np.testing.assert_allclose(prior.responsibilities(z, t, sched), w,
                                   rtol=1e-12)

    def test_denoise_in_simplex_hull(self):
        # mixture part lies in the convex hull of the one-hot basis
        prior = latent_prior(6, 0.0, softmax_temp=2.0)
        sched = build_schedule(50, sigma0=0.0)
        z = np.random.default_rng(12).standard_normal(6)
        out = prior.denoise(z, 20, sched)
        assert np.all(out >= -1e-12)
        assert np.isclose(out.sum(), 1.0)
