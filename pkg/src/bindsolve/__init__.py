"""bindsolve: factorization of binding-based hyperdimensional representations.

Solvers: coupled analytic-diffusion inference (vector and latent spaces,
Gaussian and similarity coupling energies), resonator networks, attention
resonators, and alternating least squares, behind one benchmark harness.
"""

__version__ = "0.1.0"

from .vsa import (Codebook, DecodedSolution, ProblemInstance, accuracy, bind,
                  cleanup, generate_codebooks, make_instance)
from .schedule import DiffusionSchedule, GuidanceSchedule, build_schedule, guidance_scale
from .prior import MixturePrior, latent_prior, vector_prior
from .guidance import (CouplingConfig, coupled_guidance, gaussian_energy_grad,
                       latent_gaussian_energy_grad,
                       latent_similarity_energy_grad, similarity_energy_grad)
from .sampler import (SamplerConfig, decompose, forward_jump, hard_coupled_step,
                      init_states, reverse_step)
from .baselines import (BaselineConfig, als_run, attention_resonator_run,
                        resonator_run)
from .bench import (ExperimentConfig, SweepSpec, capacity, presets, run_trials,
                    sweep, tune, tuned_presets)

__all__ = [
    "Codebook", "ProblemInstance", "DecodedSolution", "generate_codebooks",
    "bind", "make_instance", "cleanup", "accuracy",
    "DiffusionSchedule", "GuidanceSchedule", "build_schedule", "guidance_scale",
    "MixturePrior", "vector_prior", "latent_prior",
    "CouplingConfig", "gaussian_energy_grad", "similarity_energy_grad",
    "latent_gaussian_energy_grad", "latent_similarity_energy_grad",
    "coupled_guidance",
    "SamplerConfig", "init_states", "forward_jump", "reverse_step", "decompose",
    "hard_coupled_step",
    "BaselineConfig", "resonator_run", "attention_resonator_run", "als_run",
    "ExperimentConfig", "SweepSpec", "run_trials", "capacity", "sweep", "tune",
    "presets", "tuned_presets",
]
