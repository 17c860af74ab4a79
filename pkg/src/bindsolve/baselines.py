"""Discrete baselines: resonator network, attention resonator, and ALS.

All three consume the observation in raw bipolar units (the resonator is
sign-invariant to positive scaling; the attention logits and least-squares
residuals are calibrated for raw magnitudes) and produce the same
DecodedSolution record as the coupled-diffusion solver.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _kernels, flops
from .vsa import (DecodedSolution, ProblemInstance, bind,
                  exclusive_products)


@dataclass(frozen=True)
class BaselineConfig:
    iterations: int = 100
    attention_beta: float = 250.0
    normalize_logits: bool = True
    convergence_check: bool = True
    update_order: str = "jacobi"         # jacobi | gauss_seidel
    readout: str = "final"               # final | best

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.update_order not in ("gauss_seidel", "jacobi"):
            raise ValueError(f"unknown update_order {self.update_order!r}")
        if self.readout not in ("best", "final"):
            raise ValueError(f"unknown readout {self.readout!r}")


def _decode(instance: ProblemInstance, states) -> tuple[list[int], float]:
    # candidates are matched by magnitude: the composition is invariant to
    # sign flips on an even number of factors, so converged states may be
    # negated columns
    indices = []
    for cb, s in zip(instance.codebooks, states):
        scores = cb.entries.T @ s
        flops.add(flops.matvec(cb.dim, cb.size))
        indices.append(int(np.argmax(np.abs(scores))))
    comp = bind([cb.column(i) for cb, i in zip(instance.codebooks, indices)])
    obs = instance.observation_raw
    denom = float(np.linalg.norm(comp) * np.linalg.norm(obs))
    sim = abs(float(comp @ obs / denom)) if denom > 0 else 0.0
    flops.add(flops.elementwise(comp.size, 4))
    return indices, sim


def _baseline_loop(instance: ProblemInstance, config: BaselineConfig,
                   update_one) -> DecodedSolution:
    """Shared driver: iterate `update_one`, track the best decoded candidate,
    stop at fixed points or period-2 oscillations when convergence_check."""
    k = instance.num_factors
    books = [cb.entries for cb in instance.codebooks]
    obs = instance.observation_raw
    states = [b.mean(axis=1) for b in books]

    best_sim, best_idx = -np.inf, None
    prev1 = prev2 = None
    converged = oscillating = False
    iters = 0
    for it in range(config.iterations):
        if config.update_order == "jacobi":
            states = [update_one(j, states, books, obs) for j in range(k)]
        else:
            states = list(states)
            for j in range(k):
                states[j] = update_one(j, states, books, obs)
        iters = it + 1
        indices, sim = _decode(instance, states)
        if sim > best_sim:
            best_sim, best_idx = sim, indices
        if config.convergence_check and prev1 is not None:
            if all(np.array_equal(a, b) for a, b in zip(states, prev1)):
                converged = True
                break
            if prev2 is not None and all(
                    np.array_equal(a, b) for a, b in zip(states, prev2)):
                oscillating = True
                break
        prev2, prev1 = prev1, [s.copy() for s in states]

    final_idx, final_sim = _decode(instance, states)
    if config.readout == "best" and best_idx is not None:
        indices, sim = best_idx, best_sim
    else:
        indices, sim = final_idx, final_sim
    return DecodedSolution(indices=indices, factor_estimates=list(states),
                           reconstruction_similarity=sim, iterations_used=iters,
                           extras={"converged": converged,
                                   "oscillating": oscillating})


def resonator_run(instance: ProblemInstance,
                  config: BaselineConfig | None = None) -> DecodedSolution:
    """Classic bipolar resonator: sign of the auto-associative cleanup of the
    observation unbound by the other factors' current estimates."""
    config = config or BaselineConfig()

    def update_one(j, states, books, obs):
        others = [states[i] for i in range(len(states)) if i != j]
        co = bind(others) if others else np.ones_like(obs)
        v = obs * co
        flops.add(flops.elementwise(v.size, 1))
        return _kernels.autoassoc_sign(books[j], v)

    return _baseline_loop(instance, config, update_one)


def attention_resonator_run(instance: ProblemInstance,
                            config: BaselineConfig | None = None) -> DecodedSolution:
    """Softmax-readout resonator: estimates stay in the convex hull of the
    codebook columns.

    With normalize_logits the similarity logits are divided by the dimension
    (cosine scale) so the default inverse temperature of 250 operates out of
    saturation for bipolar vectors; raw logits are available for parity
    experiments.
    """
    config = config or BaselineConfig()

    def update_one(j, states, books, obs):
        others = [states[i] for i in range(len(states)) if i != j]
        co = bind(others) if others else np.ones_like(obs)
        v = obs * co
        flops.add(flops.elementwise(v.size, 1))
        beta = config.attention_beta
        if config.normalize_logits:
            beta = beta / books[j].shape[0]
        _, mean, _ = _kernels.mixture_softmax(books[j], v, beta,
                                              np.zeros(books[j].shape[1]))
        return mean

    return _baseline_loop(instance, config, update_one)


def attention_resonator_step(states, codebooks, observation, beta,
                             normalize_logits: bool = False):
    """One simultaneous attention update on explicit state vectors.

    Exposed for cross-checking against the coupled sampler's degenerate mode.
    """
    books = [np.asarray(cb, dtype=np.float64) for cb in codebooks]
    cofactors = exclusive_products([np.asarray(s, dtype=np.float64)
                                    for s in states])
    out = []
    for j, co in enumerate(cofactors):
        v = observation * co
        b = beta / books[j].shape[0] if normalize_logits else beta
        _, mean, _ = _kernels.mixture_softmax(books[j], v, b,
                                              np.zeros(books[j].shape[1]))
        out.append(mean)
    return out


def als_run(instance: ProblemInstance,
            config: BaselineConfig | None = None) -> DecodedSolution:
    """Alternating least squares over latent coefficients.

    Cycles through the factors, solving each least-squares subproblem with a
    numerically stable solver (never forming an explicit pseudoinverse), and
    decodes each coefficient vector by its largest-magnitude component (the
    composition is invariant to sign flips on an even number of factors, so
    converged coefficient vectors may be negated one-hots).
    """
    config = config or BaselineConfig()
    k = instance.num_factors
    dim = instance.dim
    books = [cb.entries for cb in instance.codebooks]
    n = books[0].shape[1]
    obs = instance.observation_raw
    underdetermined = dim < n

    zs = [np.full(b.shape[1], 1.0 / b.shape[1]) for b in books]
    rank_deficient = False
    for _ in range(config.iterations):
        for j in range(k):
            others = [books[i] @ zs[i] for i in range(k) if i != j]
            for _o in others:
                flops.add(flops.matvec(dim, n))
            co = bind(others) if others else np.ones(dim)
            design = books[j] * co[:, None]
            flops.add(flops.elementwise(design.size, 1))
            sol, _, rank, _ = scipy.linalg.lstsq(design, obs,
                                                 lapack_driver="gelsd")
            flops.add(2 * dim * books[j].shape[1] ** 2)
            if rank < books[j].shape[1]:
                rank_deficient = True
            zs[j] = sol

    indices = [int(np.argmax(np.abs(z))) for z in zs]
    comp = bind([cb.column(i) for cb, i in zip(instance.codebooks, indices)])
    denom = float(np.linalg.norm(comp) * np.linalg.norm(obs))
    sim = float(comp @ obs / denom) if denom > 0 else 0.0
    return DecodedSolution(indices=indices, factor_estimates=list(zs),
                           reconstruction_similarity=sim,
                           iterations_used=config.iterations,
                           extras={"rank_deficient": rank_deficient,
                                   "underdetermined": underdetermined})


def als_cycle_residuals(instance: ProblemInstance, cycles: int = 3) -> list[float]:
    """Residual norms after each inner solve; used to check monotonicity."""
    k = instance.num_factors
    books = [cb.entries for cb in instance.codebooks]
    obs = instance.observation_raw
    zs = [np.full(b.shape[1], 1.0 / b.shape[1]) for b in books]
    out = []
    for _ in range(cycles):
        for j in range(k):
            others = [books[i] @ zs[i] for i in range(k) if i != j]
            co = bind(others) if others else np.ones_like(obs)
            design = books[j] * co[:, None]
            zs[j], *_ = scipy.linalg.lstsq(design, obs, lapack_driver="gelsd")
            recon = bind([books[i] @ zs[i] for i in range(k)])
            out.append(float(np.linalg.norm(obs - recon)))
    return out
