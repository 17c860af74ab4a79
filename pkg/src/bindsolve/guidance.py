"""Coupling energies tying factor estimates to the observation, and the
guided conditional-score assembly (energy gradient at denoised estimates,
optional exact chain rule through the denoiser, schedule scaling, clipping).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import flops
from .prior import MixturePrior
from .schedule import DiffusionSchedule, GuidanceSchedule, guidance_scale
from .vsa import Codebook, bind

GAUSSIAN = "gaussian"
SIMILARITY = "similarity"


@dataclass(frozen=True)
class CouplingConfig:
    energy: str = SIMILARITY             # gaussian | similarity
    space: str = "vector"                # vector | latent
    eta: float = 1.0
    reg_lambda: float = 0.0              # similarity regularizer ("lambda" key)
    cond_clip_ratio: float = 1.0
    guidance_schedule: str = "constant"  # constant | linear | snr | sigma
    eta_min: float = 0.1
    eta_max: float = 1.0
    jacobian_mode: str = "exact"         # exact | straight_through

    def __post_init__(self):
        if self.energy not in (GAUSSIAN, SIMILARITY):
            raise ValueError(f"unknown energy {self.energy!r}")
        if self.space not in ("vector", "latent"):
            raise ValueError(f"unknown space {self.space!r}")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.cond_clip_ratio <= 0:
            raise ValueError("cond_clip_ratio must be positive")
        if self.reg_lambda < 0:
            raise ValueError("lambda must be nonnegative")
        if self.jacobian_mode not in ("exact", "straight_through"):
            raise ValueError(f"unknown jacobian_mode {self.jacobian_mode!r}")

    def schedule(self) -> GuidanceSchedule:
        return GuidanceSchedule(kind=self.guidance_schedule, eta=self.eta,
                                eta_min=self.eta_min, eta_max=self.eta_max)


def gaussian_energy_grad(estimates: Sequence[np.ndarray], observation: np.ndarray,
                         j: int) -> np.ndarray:
    """Gradient of -1/2 ||obs - prod(estimates)||^2 w.r.t. estimates[j]."""
    k = len(estimates)
    if not 0 <= j < k:
        raise ValueError("factor index out of range")
    co = _cofactor(estimates, j)
    residual = observation - co * np.asarray(estimates[j], dtype=np.float64)
    flops.add(flops.elementwise(observation.size, 3))
    return residual * co


def similarity_energy_grad(estimates: Sequence[np.ndarray], noisy_state_j: np.ndarray,
                           observation: np.ndarray, j: int,
                           reg_lambda: float) -> np.ndarray:
    """Gradient of obs . prod(estimates) - lambda/2 ||.||^2 w.r.t. estimates[j].

    The norm regularizer is evaluated at the noisy state, not the denoised one.
    """
    k = len(estimates)
    if not 0 <= j < k:
        raise ValueError("factor index out of range")
    co = _cofactor(estimates, j)
    grad = observation * co
    flops.add(flops.elementwise(observation.size, 1))
    if reg_lambda != 0.0:
        grad = grad - reg_lambda * np.asarray(noisy_state_j, dtype=np.float64)
        flops.add(flops.elementwise(observation.size, 2))
    return grad


def latent_gaussian_energy_grad(z_estimates: Sequence[np.ndarray],
                                codebooks: Sequence[Codebook],
                                observation: np.ndarray, j: int) -> np.ndarray:
    """Latent-space least-squares gradient, pulled back through codebook j."""
    vecs = _latent_lift(z_estimates, codebooks)
    co = _cofactor(vecs, j)
    residual = observation - co * vecs[j]
    flops.add(flops.elementwise(observation.size, 3)
              + flops.matvec(codebooks[j].dim, codebooks[j].size))
    return codebooks[j].scaled.T @ (residual * co)


def latent_similarity_energy_grad(z_estimates: Sequence[np.ndarray],
                                  codebooks: Sequence[Codebook],
                                  noisy_z_j: np.ndarray, observation: np.ndarray,
                                  j: int, reg_lambda: float) -> np.ndarray:
    """Latent-space alignment gradient, pulled back through codebook j."""
    vecs = _latent_lift(z_estimates, codebooks)
    co = _cofactor(vecs, j)
    grad = codebooks[j].scaled.T @ (observation * co)
    flops.add(flops.elementwise(observation.size, 1)
              + flops.matvec(codebooks[j].dim, codebooks[j].size))
    if reg_lambda != 0.0:
        grad = grad - reg_lambda * np.asarray(noisy_z_j, dtype=np.float64)
        flops.add(flops.elementwise(grad.size, 2))
    return grad


def _cofactor(vectors: Sequence[np.ndarray], j: int) -> np.ndarray:
    others = [np.asarray(v, dtype=np.float64) for i, v in enumerate(vectors) if i != j]
    if not others:
        return np.ones_like(np.asarray(vectors[j], dtype=np.float64))
    return bind(others)


def _latent_lift(z_estimates, codebooks) -> list[np.ndarray]:
    out = []
    for z, cb in zip(z_estimates, codebooks):
        out.append(cb.scaled @ np.asarray(z, dtype=np.float64))
        flops.add(flops.matvec(cb.dim, cb.size))
    return out


@dataclass
class GuidanceStats:
    """Per-run telemetry: how often the clip activated, snr clamping, etc."""

    steps: int = 0
    clipped: int = 0
    snr_clamped: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def clip_rate(self) -> float:
        return self.clipped / self.steps if self.steps else 0.0


def coupled_guidance(j: int, noisy_states: Sequence[np.ndarray],
                     priors: Sequence[MixturePrior], observation: np.ndarray,
                     t: int, sched: DiffusionSchedule, config: CouplingConfig,
                     codebooks: Sequence[Codebook] | None = None,
                     denoised: Sequence[np.ndarray] | None = None,
                     gammas: Sequence[np.ndarray] | None = None,
                     score_j: np.ndarray | None = None,
                     stats: GuidanceStats | None = None) -> np.ndarray:
    """Guidance term added to factor j's unconditional score at time t.

    Pipeline: denoise all factors, evaluate the configured energy gradient at
    the denoised estimates (regularizer at the noisy state), optionally apply
    the exact transposed Jacobian of the denoiser, scale per the guidance
    schedule, then clip the norm to ``cond_clip_ratio`` times the norm of the
    unconditional score (rescaling preserves direction).

    ``denoised``, ``gammas`` and ``score_j`` can be supplied by the caller to
    reuse work shared across the K per-factor calls of one step.
    """
    prior_j = priors[j]
    if denoised is None:
        denoised = [p.denoise(s, t, sched) for p, s in zip(priors, noisy_states)]
    if score_j is None:
        score_j = prior_j.score(noisy_states[j], t, sched)

    if config.space == "latent":
        if codebooks is None:
            raise ValueError("latent coupling needs the codebooks")
        if config.energy == GAUSSIAN:
            grad = latent_gaussian_energy_grad(denoised, codebooks, observation, j)
        else:
            grad = latent_similarity_energy_grad(denoised, codebooks,
                                                 noisy_states[j], observation, j,
                                                 config.reg_lambda)
    else:
        if config.energy == GAUSSIAN:
            grad = gaussian_energy_grad(denoised, observation, j)
        else:
            grad = similarity_energy_grad(denoised, noisy_states[j], observation,
                                          j, config.reg_lambda)

    if config.jacobian_mode == "exact":
        gamma_j = gammas[j] if gammas is not None else None
        grad = prior_j.denoise_vjp(noisy_states[j], t, sched, grad, gamma=gamma_j)

    scale, clamped = guidance_scale(config.schedule(), sched, t)
    grad = scale * grad
    flops.add(flops.elementwise(grad.size, 1))

    bound = config.cond_clip_ratio * float(np.linalg.norm(score_j))
    norm = float(np.linalg.norm(grad))
    flops.add(flops.elementwise(grad.size, 4))
    clipped = norm > bound
    if clipped and norm > 0.0:
        grad = grad * (bound / norm)
        flops.add(flops.elementwise(grad.size, 1))
    if stats is not None:
        stats.steps += 1
        stats.clipped += int(clipped)
        stats.snr_clamped += int(clamped)
    return grad
