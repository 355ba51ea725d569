"""Ancestral (DDPM) reverse diffusion with optional classifier-free guidance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .schedule import NoiseSchedule, step_variance


@dataclass
class SamplerConfig:
    num_steps: int = 50
    guidance_scale: float = 0.0
    null_prompt_token: int | None = None

    def __post_init__(self):
        if self.num_steps < 0:
            raise ConfigError("num_steps must be >= 0", field="num_steps")
        if not math.isfinite(self.guidance_scale) or self.guidance_scale < 0:
            raise ConfigError("guidance_scale must be finite and >= 0", field="guidance_scale")


@dataclass
class CandidateSet:
    y: int
    samples: np.ndarray
    sub_seeds: list
    scores: np.ndarray | None = field(default=None)
    iteration: int = 0

    def __len__(self):
        return len(self.samples)


def timestep_grid(schedule: NoiseSchedule, num_steps: int) -> np.ndarray:
    """Descending, evenly strided timestep indices ending at 0."""
    if num_steps > schedule.num_timesteps:
        raise ConfigError(
            f"num_steps={num_steps} exceeds schedule length {schedule.num_timesteps}", field="num_steps"
        )
    if num_steps == 0:
        return np.zeros(0, dtype=np.int64)
    grid = np.round(np.linspace(0, schedule.num_timesteps - 1, num_steps)).astype(np.int64)
    return grid[::-1].copy()


def _guided_eps(model, x, y, t, cfg: SamplerConfig):
    eps_c = model.predict(x, y, t)
    if cfg.guidance_scale == 0.0:
        return eps_c
    null = cfg.null_prompt_token
    if null is None:
        null = model.arch.null_token
    eps_u = model.predict(x, np.full(len(x), null), t)
    return eps_u + cfg.guidance_scale * (eps_c - eps_u)


def sample_batch(model, ys, schedule: NoiseSchedule, cfg: SamplerConfig, seeds) -> np.ndarray:
    """Run one reverse chain per seed in lockstep.

    Chain ``i`` draws all of its noise from ``default_rng(seeds[i])``, so its
    result does not depend on which other chains share the batch (up to
    floating-point differences in batched matrix products).
    """
    grid = timestep_grid(schedule, cfg.num_steps)
    dim = model.arch.data_dim
    ys = np.broadcast_to(np.asarray(ys, dtype=np.int64), (len(seeds),))
    noise = np.stack([np.random.default_rng(s).standard_normal((len(grid) + 1, dim)) for s in seeds])
    x = noise[:, 0, :].copy()
    ab = schedule.alpha_bar
    for k, t in enumerate(grid):
        t_prev = int(grid[k + 1]) if k + 1 < len(grid) else -1
        ab_t = ab[t]
        ab_prev = ab[t_prev] if t_prev >= 0 else 1.0
        beta = 1.0 - ab_t / ab_prev
        eps = _guided_eps(model, x, ys, int(t), cfg)
        mean = (x - beta / math.sqrt(1.0 - ab_t) * eps) / math.sqrt(1.0 - beta)
        var = step_variance(schedule, int(t), t_prev)
        x = mean + math.sqrt(var) * noise[:, k + 1, :] if var > 0 else mean
    return x


def sample(model, y: int, schedule: NoiseSchedule, cfg: SamplerConfig, rng) -> np.ndarray:
    """Draw one data point. ``rng`` is a Generator (one seed is drawn from it) or an int seed."""
    seed = _seed_from(rng)
    return sample_batch(model, [y], schedule, cfg, [seed])[0]


def _seed_from(rng) -> int:
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63))
    return int(rng)


def sample_candidates(model, y: int, n: int, schedule: NoiseSchedule, cfg: SamplerConfig, rng) -> CandidateSet:
    if n < 2:
        raise ConfigError(f"need at least 2 candidates to form a pair, got N={n}", field="n_candidates")
    seeds = [int(s) for s in rng.integers(0, 2**63, size=n)]
    return CandidateSet(int(y), sample_batch(model, y, schedule, cfg, seeds), seeds)


def sample_candidate_sets(model, prompts, n: int, schedule, cfg, rng) -> list:
    """Candidate sets for many prompts, sampled in one batched chain."""
    if n < 2:
        raise ConfigError(f"need at least 2 candidates to form a pair, got N={n}", field="n_candidates")
    prompts = [int(y) for y in prompts]
    seeds = [int(s) for s in rng.integers(0, 2**63, size=len(prompts) * n)]
    if not prompts:
        return []
    ys = np.repeat(prompts, n)
    xs = sample_batch(model, ys, schedule, cfg, seeds)
    return [
        CandidateSet(y, xs[i * n : (i + 1) * n].copy(), seeds[i * n : (i + 1) * n])
        for i, y in enumerate(prompts)
    ]
