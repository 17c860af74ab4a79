"""Analytic Gaussian-mixture priors over factor states.

Each factor's clean distribution is a uniform mixture of Gaussians centered
on its codebook columns (vector space) or on the one-hot basis vectors
(latent space), with base width ``sigma0``. Under the variance-preserving
schedule the time-t marginal is again a uniform mixture with centers
``alpha_t * c`` and width ``mix_std_t``, so responsibilities, score, the
posterior-mean denoiser (Tweedie's formula), and its Jacobian all have closed
forms. All of them route through one logit function so they stay mutually
consistent for any temperature.

Temperature convention: responsibilities use logits

    temp_eff / mix_var * (alpha c.x - alpha^2 |c|^2 / 2)

with ``temp_eff = softmax_temp / logit_norm``. With ``normalize_temp=True``
(the default for vector-space priors) ``logit_norm`` is the mean squared
column norm, putting ``softmax_temp`` in cosine units so one value transfers
across dimensions and codebook scales; this plays the same role as scaling
the codebook vectors. Latent priors have unit-norm centers, where the two
conventions coincide.

The tempered quantities are exact derivatives of the tempered free energy
returned by :meth:`MixturePrior.log_density`; at ``temp_eff = 1`` that free
energy is exactly the mixture log-density.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .schedule import DiffusionSchedule
from .vsa import Codebook

VECTOR = "vector"
LATENT = "latent"


@dataclass(frozen=True)
class MixturePrior:
    space: str                       # vector | latent
    centers: np.ndarray | None       # (dim, size) scaled columns; None = identity
    center_sqnorms: np.ndarray       # (size,)
    dim: int
    size: int
    sigma0: float
    softmax_temp: float
    logit_norm: float                # divisor applied to softmax_temp

    @property
    def temp_eff(self) -> float:
        return self.softmax_temp / self.logit_norm

    def center_matrix(self) -> np.ndarray:
        if self.centers is not None:
            return self.centers
        return np.eye(self.size)

    def center_mean(self) -> np.ndarray:
        if self.centers is not None:
            return self.centers.mean(axis=1)
        return np.full(self.size, 1.0 / self.size)

    # -- internal ----------------------------------------------------------

    def _check(self, state: np.ndarray, t: int, sched: DiffusionSchedule):
        if state.shape != (self.dim,):
            raise ValueError(f"state must have shape ({self.dim},)")
        if not 0 <= t <= sched.steps:
            raise ValueError("t out of range")
        w2 = sched.mix_var(t)
        if w2 == 0.0:
            raise ValueError(
                "degenerate mixture: mix_std[t] = 0 (t=0 with sigma0=0); "
                "the prior is a sum of point masses there")
        return w2

    def _gamma_mu(self, state, t, sched):
        """Responsibilities and their weighted center mean, plus the logit LSE."""
        w2 = self._check(state, t, sched)
        a = float(sched.alpha[t])
        scale = self.temp_eff * a / w2
        offsets = -0.5 * self.temp_eff * a * a / w2 * self.center_sqnorms
        if self.centers is None:
            return _kernels.mixture_softmax_identity(state, scale, offsets) + (w2,)
        return _kernels.mixture_softmax(self.centers, state, scale, offsets) + (w2,)

    # -- public surface ------------------------------------------------------

    def responsibilities(self, state, t, sched) -> np.ndarray:
        state = np.asarray(state, dtype=np.float64)
        gamma, _, _, _ = self._gamma_mu(state, t, sched)
        return gamma

    def log_density(self, state, t, sched) -> float:
        """Tempered mixture free energy; the exact log-density at temp_eff = 1."""
        state = np.asarray(state, dtype=np.float64)
        _, _, lse, w2 = self._gamma_mu(state, t, sched)
        quad = float(state @ state) / (2.0 * w2)
        const = 0.5 * self.dim * np.log(2.0 * np.pi * w2) + np.log(self.size)
        return lse / self.temp_eff - quad - const

    def score(self, state, t, sched) -> np.ndarray:
        """Gradient of :meth:`log_density` with respect to the state."""
        state = np.asarray(state, dtype=np.float64)
        _, mu, _, w2 = self._gamma_mu(state, t, sched)
        a = float(sched.alpha[t])
        return (a * mu - state) / w2

    def denoise(self, state, t, sched) -> np.ndarray:
        """Posterior-mean estimate of the clean vector (Tweedie's formula)."""
        state = np.asarray(state, dtype=np.float64)
        _, mu, _, w2 = self._gamma_mu(state, t, sched)
        a = float(sched.alpha[t])
        b2 = float(sched.sigma[t]) ** 2
        return (b2 / w2) * mu + (a * self.sigma0 ** 2 / w2) * state

    def score_and_denoise(self, state, t, sched):
        """Both quantities from one responsibilities evaluation."""
        state = np.asarray(state, dtype=np.float64)
        gamma, mu, _, w2 = self._gamma_mu(state, t, sched)
        a = float(sched.alpha[t])
        b2 = float(sched.sigma[t]) ** 2
        score = (a * mu - state) / w2
        den = (b2 / w2) * mu + (a * self.sigma0 ** 2 / w2) * state
        return score, den, gamma

    def denoise_vjp(self, state, t, sched, vec, gamma=None) -> np.ndarray:
        """Apply the transposed Jacobian of :meth:`denoise` to ``vec``.

        The Jacobian is symmetric:

            J = (sigma_t^2 / mix_var) * s * C (diag(g) - g g^T) C^T
                + (alpha_t sigma0^2 / mix_var) * I

        with ``s`` the logit scale used by the responsibilities, so J^T v
        costs one extra pair of mat-vecs.
        """
        state = np.asarray(state, dtype=np.float64)
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError("vec dimension mismatch")
        if gamma is None:
            gamma, _, _, w2 = self._gamma_mu(state, t, sched)
        else:
            w2 = self._check(state, t, sched)
        a = float(sched.alpha[t])
        b2 = float(sched.sigma[t]) ** 2
        logit_scale = self.temp_eff * a / w2
        coef_mix = (b2 / w2) * logit_scale
        coef_id = a * self.sigma0 ** 2 / w2
        if self.centers is None:
            return _kernels.softmax_jacobian_apply_identity(gamma, vec,
                                                            coef_mix, coef_id)
        return _kernels.softmax_jacobian_apply(self.centers, gamma, vec,
                                               coef_mix, coef_id)


def vector_prior(codebook: Codebook, sigma0: float, softmax_temp: float = 1.0,
                 normalize_temp: bool = True) -> MixturePrior:
    """Mixture prior over a factor's scaled codebook columns."""
    centers = np.ascontiguousarray(codebook.scaled)
    sq = np.sum(centers * centers, axis=0)
    norm = float(sq.mean()) if normalize_temp else 1.0
    return MixturePrior(space=VECTOR, centers=centers, center_sqnorms=sq,
                        dim=codebook.dim, size=codebook.size,
                        sigma0=float(sigma0), softmax_temp=float(softmax_temp),
                        logit_norm=norm)


def latent_prior(size: int, sigma0: float, softmax_temp: float = 1.0) -> MixturePrior:
    """Mixture prior over the one-hot basis of dimension ``size``."""
    if size < 1:
        raise ValueError("size must be positive")
    return MixturePrior(space=LATENT, centers=None,
                        center_sqnorms=np.ones(size), dim=size, size=size,
                        sigma0=float(sigma0), softmax_temp=float(softmax_temp),
                        logit_norm=1.0)
