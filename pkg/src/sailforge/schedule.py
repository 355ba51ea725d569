"""Forward diffusion coefficients and the noising operation.

Timesteps are integer indices ``0 .. T-1``. ``alpha_bar[t]`` is the cumulative
signal retention, so ``x_t = sqrt(alpha_bar[t]) x0 + sqrt(1 - alpha_bar[t]) eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    num_timesteps: int
    alpha_bar: np.ndarray
    posterior_var: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        for arr in (self.alpha_bar, self.posterior_var, self.betas):
            arr.setflags(write=False)

    def __len__(self):
        return self.num_timesteps


def build_schedule(
    num_timesteps: int = 100,
    kind: str = "linear",
    beta_min: float = 1e-4,
    beta_max: float = 0.2,
) -> NoiseSchedule:
    if not isinstance(num_timesteps, (int, np.integer)) or num_timesteps < 1:
        raise ConfigError(f"num_timesteps must be >= 1, got {num_timesteps!r}", field="num_timesteps")
    if not 0.0 < beta_min < 1.0:
        raise ConfigError(f"beta_min must lie in (0, 1), got {beta_min!r}", field="beta_min")
    if not beta_min <= beta_max < 1.0:
        raise ConfigError(f"beta_max must lie in [beta_min, 1), got {beta_max!r}", field="beta_max")

    if kind == "linear":
        betas = np.linspace(beta_min, beta_max, num_timesteps, dtype=np.float64)
    elif kind == "cosine":
        # Nichol & Dhariwal offset cosine, betas clipped into [beta_min, beta_max]
        s = 0.008
        steps = np.arange(num_timesteps + 1, dtype=np.float64) / num_timesteps
        f = np.cos((steps + s) / (1 + s) * math.pi / 2) ** 2
        betas = np.clip(1.0 - f[1:] / f[:-1], beta_min, beta_max)
    else:
        raise ConfigError(f"unknown schedule kind {kind!r}", field="kind")

    alpha_bar = np.cumprod(1.0 - betas)
    prev = np.concatenate([[1.0], alpha_bar[:-1]])
    posterior_var = betas * (1.0 - prev) / (1.0 - alpha_bar)
    return NoiseSchedule(int(num_timesteps), alpha_bar, posterior_var, betas)


def forward_diffuse(x0, t, eps, schedule: NoiseSchedule):
    """Noise ``x0`` to timestep ``t``; ``t`` may be a scalar or one index per row."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"x0 shape {x0.shape} does not match eps shape {eps.shape}")
    t = np.asarray(t)
    if np.any(t < 0) or np.any(t >= schedule.num_timesteps):
        raise IndexError(f"timestep {t} outside [0, {schedule.num_timesteps})")
    ab = schedule.alpha_bar[t]
    if ab.ndim:
        ab = ab.reshape(ab.shape + (1,) * (x0.ndim - ab.ndim))
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def step_variance(schedule: NoiseSchedule, t: int, t_prev: int) -> float:
    """Posterior variance for a (possibly strided) reverse step ``t -> t_prev``.

    ``t_prev = -1`` denotes the clean-data end of the chain and has zero
    variance. With stride one this equals ``schedule.posterior_var[t]``.
    """
    if t_prev < 0:
        return 0.0
    ab_t = schedule.alpha_bar[t]
    ab_prev = schedule.alpha_bar[t_prev]
    beta = 1.0 - ab_t / ab_prev
    return float(beta * (1.0 - ab_prev) / (1.0 - ab_t))
