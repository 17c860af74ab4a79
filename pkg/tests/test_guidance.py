"""Coupling energies, their finite-difference oracles, and guidance assembly."""
import numpy as np
import pytest

from bindsolve.guidance import (CouplingConfig, GuidanceStats, coupled_guidance,
                                gaussian_energy_grad,
                                latent_gaussian_energy_grad,
                                latent_similarity_energy_grad,
                                similarity_energy_grad)
from bindsolve.prior import vector_prior
from bindsolve.schedule import build_schedule
from bindsolve.vsa import bind, generate_codebooks, make_instance


def fd_partial(f, vecs, j, h=1e-6):
    x = vecs[j]
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        up = [v.copy() for v in vecs]
        dn = [v.copy() for v in vecs]
        up[j] = x + e
        dn[j] = x - e
        g[i] = (f(up) - f(dn)) / (2 * h)
    return g


class TestGaussianEnergyGrad:
    def test_zero_residual(self):
        rng = np.random.default_rng(0)
        est = [rng.choice((-1.0, 1.0), 8) for _ in range(3)]
        obs = bind(est)
        for j in range(3):
            np.testing.assert_allclose(gaussian_energy_grad(est, obs, j), 0.0,
                                       atol=1e-12)

    def test_single_factor(self):
        rng = np.random.default_rng(1)
        est = [rng.standard_normal(6)]
        obs = rng.standard_normal(6)
        np.testing.assert_allclose(gaussian_energy_grad(est, obs, 0),
                                   obs - est[0], rtol=1e-12)

    def test_finite_difference(self):
        rng = np.random.default_rng(2)
        for probe in range(100):
            est = [rng.standard_normal(5) for _ in range(3)]
            obs = rng.standard_normal(5)

            def energy(vs):
                return -0.5 * float(np.sum((obs - bind(vs)) ** 2))

            j = probe % 3
            ana = gaussian_energy_grad(est, obs, j)
            num = fd_partial(energy, est, j)
            np.testing.assert_allclose(ana, num, rtol=1e-6, atol=1e-8)


class TestSimilarityEnergyGrad:
    def test_two_factor_form(self):
        rng = np.random.default_rng(3)
        est = [rng.standard_normal(7) for _ in range(2)]
        obs = rng.standard_normal(7)
        np.testing.assert_allclose(
            similarity_energy_grad(est, est[0], obs, 0, 0.0), obs * est[1],
            rtol=1e-12)

    def test_regularizer_only(self):
        noisy = np.arange(4.0)
        est = [np.ones(4), np.ones(4)]
        out = similarity_energy_grad(est, noisy, np.zeros(4), 0, reg_lambda=2.0)
        np.testing.assert_allclose(out, -2.0 * noisy)

    def test_finite_difference_alignment_term(self):
        rng = np.random.default_rng(4)
        for probe in range(100):
            est = [rng.standard_normal(5) for _ in range(3)]
            obs = rng.standard_normal(5)

            def energy(vs):
                return float(obs @ bind(vs))

            j = probe % 3
            ana = similarity_energy_grad(est, est[j], obs, j, 0.0)
            num = fd_partial(energy, est, j)
            np.testing.assert_allclose(ana, num, rtol=1e-6, atol=1e-8)

    def test_regularizer_is_exact_linear_term(self):
        rng = np.random.default_rng(5)
        est = [rng.standard_normal(6) for _ in range(2)]
        noisy = rng.standard_normal(6)
        obs = rng.standard_normal(6)
        lam = 0.7
        with_reg = similarity_energy_grad(est, noisy, obs, 1, lam)
        without = similarity_energy_grad(est, noisy, obs, 1, 0.0)
        np.testing.assert_allclose(with_reg, without - lam * noisy, rtol=1e-12)


class TestLatentEnergyGrads:
    def setup_method(self):
        self.books = generate_codebooks(6, 8, 3, 2)
        self.inst = make_instance(self.books, [1, 2], m=1, seed=3)

    def test_zero_residual_at_truth(self):
        zs = [np.eye(3)[1], np.eye(3)[2]]
        for j in range(2):
            out = latent_gaussian_energy_grad(zs, self.books,
                                              self.inst.observation, j)
            np.testing.assert_allclose(out, 0.0, atol=1e-10)

    def test_single_factor_gaussian(self):
        books = generate_codebooks(7, 10, 4, 1)
        rng = np.random.default_rng(6)
        z = [rng.standard_normal(4)]
        obs = rng.standard_normal(10)
        expected = books[0].scaled.T @ (obs - books[0].scaled @ z[0])
        np.testing.assert_allclose(
            latent_gaussian_energy_grad(z, books, obs, 0), expected, rtol=1e-10)

    def test_gaussian_finite_difference(self):
        rng = np.random.default_rng(7)
        books = generate_codebooks(8, 8, 3, 2)
        X = [cb.scaled for cb in books]
        for probe in range(100):
            zs = [rng.standard_normal(3) for _ in range(2)]
            obs = rng.standard_normal(8)

            def energy(vs):
                return -0.5 * float(np.sum((obs - bind([X[0] @ vs[0],
                                                        X[1] @ vs[1]])) ** 2))

            j = probe % 2
            ana = latent_gaussian_energy_grad(zs, books, obs, j)
            num = fd_partial(energy, zs, j)
            np.testing.assert_allclose(ana, num, rtol=1e-6, atol=1e-8)

    def test_similarity_trivial_cases(self):
        books = generate_codebooks(9, 12, 5, 1)
        obs = np.random.default_rng(8).standard_normal(12)
        out = latent_similarity_energy_grad([np.zeros(5)], books, np.zeros(5),
                                            obs, 0, 0.0)
        np.testing.assert_allclose(out, books[0].scaled.T @ obs, rtol=1e-12)
        out = latent_similarity_energy_grad([np.zeros(5)], books,
                                            np.arange(5.0), np.zeros(12), 0, 1.0)
        np.testing.assert_allclose(out, -np.arange(5.0))

    def test_similarity_finite_difference(self):
        rng = np.random.default_rng(9)
        books = generate_codebooks(10, 8, 3, 2)
        X = [cb.scaled for cb in books]
        for probe in range(100):
            zs = [rng.standard_normal(3) for _ in range(2)]
            obs = rng.standard_normal(8)

            def energy(vs):
                return float(obs @ bind([X[0] @ vs[0], X[1] @ vs[1]]))

            j = probe % 2
            ana = latent_similarity_energy_grad(zs, books, zs[j], obs, j, 0.0)
            num = fd_partial(energy, zs, j)
            np.testing.assert_allclose(ana, num, rtol=1e-6, atol=1e-8)


class TestCoupledGuidance:
    def _setup(self, sigma0=0.2, temp=2.0, **cfg_kw):
        books = generate_codebooks(10, 16, 4, 2)
        inst = make_instance(books, [0, 1], m=1, seed=5)
        priors = [vector_prior(cb, sigma0, temp) for cb in books]
        sched = build_schedule(50, sigma0=sigma0)
        config = CouplingConfig(**cfg_kw)
        return books, inst, priors, sched, config

    def test_zero_energy_gradient_in_zero_out(self):
        books, inst, priors, sched, config = self._setup(
            energy="similarity", eta=0.5, cond_clip_ratio=2.0)
        rng = np.random.default_rng(11)
        states = [rng.standard_normal(16) for _ in range(2)]
        # zero observation makes the alignment gradient vanish
        out = coupled_guidance(0, states, priors, np.zeros(16), 10, sched,
                               config)
        np.testing.assert_allclose(out, 0.0, atol=1e-12)

    def test_clip_rescales_to_bound(self):
        books, inst, priors, sched, config = self._setup(
            energy="similarity", eta=1e-9, cond_clip_ratio=1.0)
        rng = np.random.default_rng(12)
        states = [rng.standard_normal(16) for _ in range(2)]
        stats = GuidanceStats()
        out = coupled_guidance(0, states, priors, inst.observation, 10, sched,
                               config, stats=stats)
        bound = config.cond_clip_ratio * np.linalg.norm(
            priors[0].score(states[0], 10, sched))
        assert np.isclose(np.linalg.norm(out), bound, rtol=1e-9)
        assert stats.clipped == 1

    def test_clip_preserves_direction(self):
        books, inst, priors, sched, config = self._setup(
            energy="similarity", eta=1e-9, cond_clip_ratio=1.0,
            jacobian_mode="straight_through")
        rng = np.random.default_rng(13)
        states = [rng.standard_normal(16) for _ in range(2)]
        clipped = coupled_guidance(0, states, priors, inst.observation, 10,
                                   sched, config)
        loose = coupled_guidance(
            0, states, priors, inst.observation, 10, sched,
            CouplingConfig(energy="similarity", eta=1e-9,
                           cond_clip_ratio=1e12,
                           jacobian_mode="straight_through"))
        cos = clipped @ loose / (np.linalg.norm(clipped) * np.linalg.norm(loose))
        assert np.isclose(cos, 1.0, atol=1e-12)

    def test_factor_role_symmetry(self):
        # swapping the two factors' inputs swaps the outputs
        books, inst, priors, sched, config = self._setup(
            energy="gaussian", eta=0.3, cond_clip_ratio=5.0)
        rng = np.random.default_rng(14)
        s0, s1 = rng.standard_normal(16), rng.standard_normal(16)
        g0 = coupled_guidance(0, [s0, s1], priors, inst.observation, 8, sched,
                              config)
        g1 = coupled_guidance(1, [s1, s0], priors[::-1], inst.observation, 8,
                              sched, config)
        np.testing.assert_allclose(g0, g1, rtol=1e-10)

    def test_straight_through_vs_exact_when_saturated(self):
        # one-hot responsibilities: exact equals straight-through scaled by
        # the identity leak alpha*sigma0^2/mix_var
        books = generate_codebooks(15, 16, 4, 2)
        inst = make_instance(books, [0, 1], m=1, seed=6)
        priors = [vector_prior(cb, 0.2, softmax_temp=5000.0,
                               normalize_temp=False) for cb in books]
        sched = build_schedule(50, sigma0=0.2)
        t = 5
        states = [sched.alpha[t] * cb.column(i)
                  for cb, i in zip(books, [2, 3])]
        kw = dict(energy="similarity", eta=0.5, cond_clip_ratio=1e12)
        exact = coupled_guidance(0, states, priors, inst.observation, t, sched,
                                 CouplingConfig(jacobian_mode="exact", **kw))
        st = coupled_guidance(0, states, priors, inst.observation, t, sched,
                              CouplingConfig(jacobian_mode="straight_through",
                                             **kw))
        leak = sched.alpha[t] * 0.2 ** 2 / sched.mix_var(t)
        np.testing.assert_allclose(exact, leak * st, atol=1e-7)

    def test_latent_space_requires_codebooks(self):
        books, inst, priors, sched, _ = self._setup()
        config = CouplingConfig(space="latent")
        with pytest.raises(ValueError):
            coupled_guidance(0, [np.zeros(4), np.zeros(4)], priors,
                             inst.observation, 5, sched, config)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CouplingConfig(energy="hinge")
        with pytest.raises(ValueError):
            CouplingConfig(eta=-1.0)
        with pytest.raises(ValueError):
            CouplingConfig(cond_clip_ratio=0.0)
        with pytest.raises(ValueError):
            CouplingConfig(jacobian_mode="autograd")
