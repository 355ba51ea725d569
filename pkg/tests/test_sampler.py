import math

import numpy as np
import pytest

from sailforge.denoiser import Arch
from sailforge.errors import ConfigError
from sailforge.sampler import (
    SamplerConfig, sample, sample_batch, sample_candidate_sets, sample_candidates, timestep_grid,
)


class ExactGaussianNoise:
    """Noise predictor that is exact for clean data ~ N(mu_y, s2 I), one mean per token."""

    def __init__(self, means, s2, schedule):
        self.means = np.asarray(means, dtype=float)
        self.s2, self.ab = s2, schedule.alpha_bar
        self.arch = Arch(data_dim=self.means.shape[1], vocab_size=len(self.means),
                         num_timesteps=schedule.num_timesteps)

    def predict(self, x, y, t):
        ab = self.ab[t]
        mu = self.means[np.asarray(y)]
        return math.sqrt(1 - ab) * (x - math.sqrt(ab) * mu) / (ab * self.s2 + 1 - ab)


def test_zero_steps_returns_initial_draw(model_pair, schedule):
    model, _ = model_pair
    x = sample(model, 0, schedule, SamplerConfig(num_steps=0), 1234)
    assert np.array_equal(x, np.random.default_rng(1234).standard_normal((1, 2))[0])


def test_same_seed_same_sample(model_pair, schedule):
    model, _ = model_pair
    a = sample(model, 1, schedule, SamplerConfig(), np.random.default_rng(9))
    b = sample(model, 1, schedule, SamplerConfig(), np.random.default_rng(9))
    assert a.tobytes() == b.tobytes()


def test_gaussian_mean_within_three_standard_errors(schedule):
    mu, s2, n = np.array([[-0.7, 2.0]]), 0.5, 10_000
    model = ExactGaussianNoise(mu, s2, schedule)
    seeds = [int(s) for s in np.random.default_rng(42).integers(0, 2**63, size=n)]
    xs = sample_batch(model, np.zeros(n, dtype=np.int64), schedule, SamplerConfig(), seeds)
    z = np.abs(xs.mean(axis=0) - mu[0]) / math.sqrt(s2 / n)
    assert np.all(z < 3.0)


def test_chain_independent_of_batch_company(schedule):
    model = ExactGaussianNoise([[0.0, 0.0], [3.0, 1.0]], 0.2, schedule)
    alone = sample_batch(model, [1], schedule, SamplerConfig(), [77])
    together = sample_batch(model, [0, 1, 0], schedule, SamplerConfig(), [5, 77, 6])
    assert np.allclose(alone[0], together[1], atol=1e-12)


def test_unit_guidance_equals_conditional(model_pair, schedule):
    model, _ = model_pair
    plain = sample_batch(model, [2], schedule, SamplerConfig(guidance_scale=0.0), [3])
    guided = sample_batch(model, [2], schedule, SamplerConfig(guidance_scale=1.0), [3])
    assert np.allclose(plain, guided, atol=1e-10)


def test_guidance_changes_samples(model_pair, schedule):
    model, _ = model_pair
    plain = sample_batch(model, [2], schedule, SamplerConfig(), [3])
    guided = sample_batch(model, [2], schedule, SamplerConfig(guidance_scale=3.0), [3])
    assert not np.allclose(plain, guided)


def test_timestep_grid_is_descending_and_ends_at_zero(schedule):
    grid = timestep_grid(schedule, 50)
    assert len(grid) == 50 and grid[0] == 99 and grid[-1] == 0
    assert np.all(np.diff(grid) < 0)
    assert np.array_equal(timestep_grid(schedule, 100), np.arange(99, -1, -1))


def test_grid_longer_than_schedule_raises(schedule):
    with pytest.raises(ConfigError):
        timestep_grid(schedule, 101)


@pytest.mark.parametrize("n", [2, 8])
def test_candidate_set_sizes(model_pair, schedule, n):
    cs = sample_candidates(model_pair[0], 1, n, schedule, SamplerConfig(), np.random.default_rng(0))
    assert len(cs) == n and cs.samples.shape == (n, 2) and len(cs.sub_seeds) == n


def test_candidates_reproducible(model_pair, schedule):
    a = sample_candidates(model_pair[0], 1, 8, schedule, SamplerConfig(), np.random.default_rng(4))
    b = sample_candidates(model_pair[0], 1, 8, schedule, SamplerConfig(), np.random.default_rng(4))
    assert a.samples.tobytes() == b.samples.tobytes() and a.sub_seeds == b.sub_seeds


def test_one_candidate_is_rejected(model_pair, schedule):
    with pytest.raises(ConfigError):
        sample_candidates(model_pair[0], 1, 1, schedule, SamplerConfig(), np.random.default_rng(0))


def test_batched_sets_match_per_prompt_sets(schedule):
    model = ExactGaussianNoise([[0.0, 0.0], [3.0, 1.0], [-1.0, 2.0]], 0.2, schedule)
    sets = sample_candidate_sets(model, [2, 0], 4, schedule, SamplerConfig(), np.random.default_rng(8))
    assert [cs.y for cs in sets] == [2, 0]
    for cs in sets:
        single = sample_batch(model, cs.y, schedule, SamplerConfig(), cs.sub_seeds)
        assert np.allclose(single, cs.samples, atol=1e-12)


@pytest.mark.parametrize("kw", [{"num_steps": -1}, {"guidance_scale": -0.5}, {"guidance_scale": float("inf")}])
def test_invalid_sampler_config(kw):
    with pytest.raises(ConfigError):
        SamplerConfig(**kw)
