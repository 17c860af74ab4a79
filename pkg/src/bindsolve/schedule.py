"""Discretized variance-preserving noise schedule and guidance-strength schedules.

Index convention: arrays run t = 0..T with t = 0 the data end. The per-step
retention is ``a_t = 1 - b_t / T`` for a linear ramp ``b_t`` (the /T puts the
ramp in per-unit-time units, keeping 0 < a_t < 1 for the standard b_max = 20),
and the marginal coefficients are ``alpha_t = sqrt(prod a_s)``,
``sigma_t = sqrt(1 - prod a_s)``. Mixture components at time t have total
width ``mix_std_t = sqrt(alpha_t^2 sigma0^2 + sigma_t^2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DiffusionSchedule:
    steps: int                     # T
    b_min: float
    b_max: float
    sigma0: float
    alpha: np.ndarray              # (T+1,) clean-signal coefficient, alpha[0]=1
    sigma: np.ndarray              # (T+1,) marginal noise std, sigma[0]=0
    mix_std: np.ndarray            # (T+1,) component width incl. base jitter
    step_keep: np.ndarray          # (T+1,) a_t with step_keep[0]=1

    def mix_var(self, t: int) -> float:
        return float(self.mix_std[t] ** 2)


def build_schedule(steps: int, b_min: float = 0.1, b_max: float = 20.0,
                   sigma0: float = 0.0) -> DiffusionSchedule:
    """Build the discretized schedule; rejects parameters with a_t <= 0."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if not (0 < b_min <= b_max):
        raise ValueError("need 0 < b_min <= b_max")
    if sigma0 < 0:
        raise ValueError("sigma0 must be nonnegative")
    t = np.arange(1, steps + 1, dtype=np.float64)
    ramp = b_min + (t - 1.0) / (steps - 1.0) * (b_max - b_min)
    keep = 1.0 - ramp / steps
    if np.any(keep <= 0.0):
        raise ValueError(
            f"schedule degenerate: a_t <= 0 (steps={steps} too small for "
            f"b_max={b_max}; need steps > b_max)")
    keep_bar = np.concatenate([[1.0], np.cumprod(keep)])
    alpha = np.sqrt(keep_bar)
    sigma = np.sqrt(1.0 - keep_bar)
    mix = np.sqrt(alpha ** 2 * sigma0 ** 2 + sigma ** 2)
    step_keep = np.concatenate([[1.0], keep])
    for arr in (alpha, sigma, mix, step_keep):
        arr.setflags(write=False)
    return DiffusionSchedule(steps=int(steps), b_min=float(b_min),
                             b_max=float(b_max), sigma0=float(sigma0),
                             alpha=alpha, sigma=sigma, mix_std=mix,
                             step_keep=step_keep)


@dataclass(frozen=True)
class GuidanceSchedule:
    """Time profile of the guidance strength; ``eta`` is the inverse strength."""

    kind: str = "constant"         # constant | linear | snr | sigma
    eta: float = 1.0
    eta_min: float = 0.1           # linear kind only
    eta_max: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "snr", "sigma"):
            raise ValueError(f"unknown guidance schedule kind {self.kind!r}")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.kind == "linear" and (self.eta_min <= 0 or self.eta_max <= 0):
            raise ValueError("linear endpoints must be positive")


def guidance_scale(gsched: GuidanceSchedule, dsched: DiffusionSchedule,
                   t: int) -> tuple[float, bool]:
    """Multiplier applied to the raw energy gradient at time index t.

    Returns ``(scale, clamped)`` where ``clamped`` flags the snr kind hitting
    the alpha floor.
    """
    if not 1 <= t <= dsched.steps:
        raise ValueError("t out of range")
    clamped = False
    if gsched.kind == "constant":
        factor = 1.0
    elif gsched.kind == "sigma":
        factor = float(dsched.sigma[t])
    elif gsched.kind == "snr":
        a = float(dsched.alpha[t])
        if a < 1e-12:
            a = 1e-12
            clamped = True
        factor = float(dsched.sigma[t]) / a
    else:  # linear: eta_min at t=T up to eta_max at t=1
        T = dsched.steps
        frac = (T - t) / (T - 1.0) if T > 1 else 0.0
        factor = gsched.eta_min + frac * (gsched.eta_max - gsched.eta_min)
    return factor / gsched.eta, clamped
