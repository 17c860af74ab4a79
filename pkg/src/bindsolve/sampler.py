"""Reverse-process integrators and the restart-based coupled sampling loop.

The deterministic integrator takes the discrete-exact form

    x_{t-1} = r x_t + (r sigma_t^2 - sigma_{t-1} sigma_t) s_cond,
    r = alpha_{t-1} / alpha_t

which reduces to the backward Euler step of the probability-flow ODE to first
order and, for a single-Gaussian prior, reproduces the exact marginal flow
(the per-step drift comes from the alpha ratios rather than the continuous
ramp, keeping the noiseless single-center flow exact). The stochastic
integrator is the matching ancestral form of the reverse SDE with fresh noise
per factor per step.

One decompose call runs R restarts: jump the current clean estimates forward
to the restart time, denoise back to t = 0 under the coupled conditional
score, and feed the result to the next restart. Decoded candidates are read
out each restart and the best by reconstruction similarity is kept (the only
truth-free success signal); final-restart readout is available by flag.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import flops
from .guidance import CouplingConfig, GuidanceStats, coupled_guidance
from .prior import MixturePrior
from .schedule import DiffusionSchedule
from .vsa import Codebook, DecodedSolution, ProblemInstance, bind, cleanup


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 50                    # T
    restarts: int = 2                  # R
    restart_ratio: float = 1.0         # rho
    integrator: str = "ode"            # ode | sde
    restart_jump: str = "deterministic"  # deterministic | stochastic
    update_order: str = "jacobi"       # jacobi | gauss_seidel
    readout: str = "best"              # best | final
    seed: int = 0

    def __post_init__(self):
        if self.integrator not in ("ode", "sde"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.restart_jump not in ("deterministic", "stochastic"):
            raise ValueError(f"unknown restart_jump {self.restart_jump!r}")
        if self.update_order not in ("jacobi", "gauss_seidel"):
            raise ValueError(f"unknown update_order {self.update_order!r}")
        if self.readout not in ("best", "final"):
            raise ValueError(f"unknown readout {self.readout!r}")
        if not 0.0 <= self.restart_ratio <= 1.0:
            raise ValueError("restart_ratio must be in [0, 1]")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    @property
    def jump_steps(self) -> int:
        return int(np.floor(self.restart_ratio * self.steps))

    @property
    def iteration_budget(self) -> int:
        """kappa = R * floor(rho * T), the total reverse steps per run."""
        return self.restarts * self.jump_steps


@dataclass
class RunTrace:
    """Per-restart (and optionally per-step) telemetry serializable to JSONL."""

    records: list[dict] = field(default_factory=list)
    guidance: GuidanceStats = field(default_factory=GuidanceStats)
    diverged_at: tuple[int, int] | None = None    # (restart, t)
    per_step: bool = False

    def add(self, **kw) -> None:
        self.records.append(kw)

    def to_jsonl(self) -> str:
        import json
        lines = [json.dumps(r) for r in self.records]
        lines.append(json.dumps({
            "kind": "guidance_stats",
            "steps": self.guidance.steps,
            "clip_rate": self.guidance.clip_rate,
            "snr_clamped": self.guidance.snr_clamped,
            "diverged_at": self.diverged_at,
        }))
        return "\n".join(lines) + "\n"


def init_states(priors: Sequence[MixturePrior]) -> list[np.ndarray]:
    """Start every factor at the mean of its prior's centers."""
    return [p.center_mean().copy() for p in priors]


def forward_jump(state0: np.ndarray, tau_index: int, sched: DiffusionSchedule,
                 mode: str, rng: np.random.Generator) -> np.ndarray:
    """Move a clean estimate to time tau_index along the forward process.

    Deterministic mode takes the conditional mean; stochastic mode draws from
    the full conditional.
    """
    if not 0 <= tau_index <= sched.steps:
        raise ValueError("tau_index out of range")
    a = float(sched.alpha[tau_index])
    out = a * np.asarray(state0, dtype=np.float64)
    flops.add(flops.elementwise(out.size, 1))
    if mode == "stochastic" and tau_index > 0:
        out = out + float(sched.sigma[tau_index]) * rng.standard_normal(out.shape)
        flops.add(flops.elementwise(out.size, 2))
    return out


def _integrate(state: np.ndarray, s_cond: np.ndarray, t: int,
               sched: DiffusionSchedule, integrator: str,
               rng: np.random.Generator) -> np.ndarray:
    ratio = float(sched.alpha[t - 1] / sched.alpha[t])
    if integrator == "ode":
        coef = ratio * float(sched.sigma[t]) ** 2 \
            - float(sched.sigma[t - 1] * sched.sigma[t])
        out = ratio * state + coef * s_cond
        flops.add(flops.elementwise(state.size, 3))
    else:
        keep = float(sched.step_keep[t])
        out = (state + (1.0 - keep) * s_cond) / np.sqrt(keep)
        flops.add(flops.elementwise(state.size, 4))
        if t > 1:
            out = out + np.sqrt(1.0 - keep) * rng.standard_normal(state.shape)
            flops.add(flops.elementwise(state.size, 2))
    return out


def reverse_step(states: Sequence[np.ndarray], t: int,
                 priors: Sequence[MixturePrior], observation: np.ndarray,
                 coupling: CouplingConfig, sched: DiffusionSchedule,
                 integrator: str = "ode",
                 rng: np.random.Generator | None = None,
                 codebooks: Sequence[Codebook] | None = None,
                 update_order: str = "jacobi",
                 stats: GuidanceStats | None = None) -> list[np.ndarray]:
    """One coupled reverse step t -> t-1 for all K factors.

    Jacobi order evaluates every factor against the step-t co-states;
    gauss_seidel sweeps in place, each factor seeing the ones already updated.
    """
    if t < 1:
        raise ValueError("reverse_step needs t >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    k = len(states)
    work = [np.asarray(s, dtype=np.float64) for s in states]
    gauss_seidel = update_order == "gauss_seidel"

    evals = [priors[i].score_and_denoise(work[i], t, sched) for i in range(k)]
    out: list[np.ndarray] = list(work)
    for j in range(k):
        if gauss_seidel and j > 0:
            # only the factor updated in place went stale
            evals[j - 1] = priors[j - 1].score_and_denoise(work[j - 1], t, sched)
        scores = [e[0] for e in evals]
        denoised = [e[1] for e in evals]
        gammas = [e[2] for e in evals]
        g = coupled_guidance(j, work, priors, observation, t, sched, coupling,
                             codebooks=codebooks, denoised=denoised,
                             gammas=gammas, score_j=scores[j], stats=stats)
        s_cond = scores[j] + g
        flops.add(flops.elementwise(g.size, 1))
        stepped = _integrate(work[j], s_cond, t, sched, integrator, rng)
        if gauss_seidel:
            work[j] = stepped
        out[j] = stepped
    if not all(np.all(np.isfinite(s)) for s in out):
        raise FloatingPointError("non-finite state in reverse step")
    return out


def _readout(states, priors, codebooks, instance, sched, coupling):
    """Decode indices from denoised final states and score the reconstruction."""
    indices = []
    estimates = []
    for j, (p, s) in enumerate(zip(priors, states)):
        t0 = 0 if p.sigma0 > 0 else 1
        est = p.denoise(s, t0, sched)
        estimates.append(est)
        if coupling.space == "latent":
            indices.append(int(np.argmax(est)))
        else:
            idx, _, _ = cleanup(codebooks[j], est, scaled=True)
            indices.append(idx)
    comp = bind([cb.column(i) for cb, i in zip(instance.codebooks, indices)])
    obs = instance.observation_raw
    denom = float(np.linalg.norm(comp) * np.linalg.norm(obs))
    sim = float(comp @ obs / denom) if denom > 0 else 0.0
    flops.add(flops.elementwise(comp.size, 4))
    return indices, estimates, sim


def build_priors(instance: ProblemInstance, coupling: CouplingConfig,
                 sigma0: float, softmax_temp: float,
                 normalize_temp: bool = True) -> list[MixturePrior]:
    from .prior import latent_prior, vector_prior
    if coupling.space == "latent":
        return [latent_prior(cb.size, sigma0, softmax_temp)
                for cb in instance.codebooks]
    return [vector_prior(cb, sigma0, softmax_temp, normalize_temp)
            for cb in instance.codebooks]


def decompose(instance: ProblemInstance, priors: Sequence[MixturePrior],
              coupling: CouplingConfig, sampler: SamplerConfig,
              sched: DiffusionSchedule,
              trace: RunTrace | None = None) -> DecodedSolution:
    """Run the full restart loop and return the decoded solution.

    Divergence (non-finite states) aborts the run; the trial is reported with
    ``diverged=True`` so the bench layer can count it as incorrect rather
    than dropping it.
    """
    rng = np.random.default_rng(np.random.SeedSequence([sampler.seed, 0xd1f]))
    codebooks = list(instance.codebooks)
    observation = instance.observation
    tau = sampler.jump_steps
    trace = trace if trace is not None else RunTrace()

    states0 = init_states(priors)
    if tau == 0 or sampler.iteration_budget == 0:
        indices, estimates, sim = _readout(states0, priors, codebooks,
                                           instance, sched, coupling)
        return DecodedSolution(indices=indices, factor_estimates=estimates,
                               reconstruction_similarity=sim, iterations_used=0,
                               degenerate=True)

    best: tuple[float, list[int], list[np.ndarray]] | None = None
    final: tuple[float, list[int], list[np.ndarray]] | None = None
    steps_done = 0
    for r in range(sampler.restarts):
        states = [forward_jump(s, tau, sched,
                               "stochastic" if sampler.restart_jump == "stochastic"
                               else "deterministic", rng)
                  for s in states0]
        try:
            for t in range(tau, 0, -1):
                states = reverse_step(states, t, priors, observation, coupling,
                                      sched, integrator=sampler.integrator,
                                      rng=rng, codebooks=codebooks,
                                      update_order=sampler.update_order,
                                      stats=trace.guidance)
                steps_done += 1
                if trace.per_step:
                    trace.add(kind="step", restart=r, t=t - 1,
                              state_norms=[float(np.linalg.norm(s))
                                           for s in states])
        except FloatingPointError:
            trace.diverged_at = (r, t)
            indices = [0] * instance.num_factors
            return DecodedSolution(indices=indices, factor_estimates=list(states0),
                                   reconstruction_similarity=-1.0,
                                   iterations_used=sampler.iteration_budget,
                                   diverged=True,
                                   extras={"diverged_at": trace.diverged_at})
        states0 = states
        indices, estimates, sim = _readout(states, priors, codebooks, instance,
                                           sched, coupling)
        trace.add(kind="restart", restart=r, indices=indices,
                  reconstruction=sim)
        final = (sim, indices, estimates)
        if best is None or sim > best[0]:
            best = (sim, indices, estimates)

    sim, indices, estimates = best if sampler.readout == "best" else final
    return DecodedSolution(indices=indices, factor_estimates=estimates,
                           reconstruction_similarity=sim,
                           iterations_used=sampler.restarts * tau,
                           extras={"steps_executed": steps_done,
                                   "clip_rate": trace.guidance.clip_rate})


def hard_coupled_step(states: Sequence[np.ndarray], observation: np.ndarray,
                      t: int, priors: Sequence[MixturePrior],
                      sched: DiffusionSchedule) -> list[np.ndarray]:
    """Degenerate fully-coupled update: each factor becomes the observation
    unbound by the other factors' denoised estimates.

    Requires equal-norm centers and sigma0 = 0, where one such update equals
    one attention-resonator step at inverse temperature
    ``alpha_t * temp_eff / sigma_t^2``.
    """
    for p in priors:
        if p.sigma0 != 0.0:
            raise ValueError("hard coupling requires sigma0 = 0")
        if not np.allclose(p.center_sqnorms, p.center_sqnorms[0]):
            raise ValueError("hard coupling requires equal-norm centers")
    denoised = [p.denoise(np.asarray(s, dtype=np.float64), t, sched)
                for p, s in zip(priors, states)]
    out = []
    k = len(states)
    for j in range(k):
        others = [denoised[i] for i in range(k) if i != j]
        co = bind(others) if others else np.ones_like(observation)
        out.append(observation * co)
        flops.add(flops.elementwise(observation.size, 1))
    return out
