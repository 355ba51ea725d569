"""Synthetic preference task: ground-truth oracle, seed pairs, and mixup replay.

Each prompt token ``y`` owns a preferred centre ``mu*_y`` on a circle and a
decoy centre diametrically opposite. Pretraining data is an equal mixture of
isotropic Gaussians at both centres, so the base model splits its mass and
alignment shows up as mass moving onto the preferred mode.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .pairs import PreferenceDataset, PreferencePair
from .sampler import CandidateSet, sample_batch
from .selfreward import pair_from_candidates, select_pair

log = logging.getLogger(__name__)


@dataclass
class TaskConfig:
    vocab_size: int = 8
    data_dim: int = 2
    radius: float = 2.0
    mode_var: float = 0.1
    samples_per_prompt: int = 1000


@dataclass(frozen=True, eq=False)
class GroundTruthOracle:
    """Reward ``-||x - mu*_y||^2``; stands in for human annotators."""

    targets: np.ndarray

    def reward(self, y, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        diff = x - self.targets[np.asarray(y)]
        return -np.sum(diff * diff, axis=-1)

    @property
    def vocab_size(self) -> int:
        return len(self.targets)


def task_centres(task: TaskConfig):
    """(preferred, decoy) centres, each of shape (K, D)."""
    angles = 2.0 * math.pi * np.arange(task.vocab_size) / task.vocab_size
    pref = np.zeros((task.vocab_size, task.data_dim))
    pref[:, 0] = task.radius * np.cos(angles)
    if task.data_dim > 1:
        pref[:, 1] = task.radius * np.sin(angles)
    return pref, -pref


def make_oracle(task: TaskConfig) -> GroundTruthOracle:
    return GroundTruthOracle(task_centres(task)[0])


def make_pretrain_data(task: TaskConfig, rng: np.random.Generator) -> dict:
    """Token -> samples from the equal two-mode mixture."""
    pref, decoy = task_centres(task)
    std = math.sqrt(task.mode_var)
    data = {}
    for y in range(task.vocab_size):
        pick = rng.random(task.samples_per_prompt) < 0.5
        centres = np.where(pick[:, None], pref[y], decoy[y])
        data[y] = centres + std * rng.standard_normal((task.samples_per_prompt, task.data_dim))
    return data


def oracle_label(oracle: GroundTruthOracle, y: int, x_a, x_b):
    """(winner, loser) by the oracle, or ``None`` on an exact tie."""
    r_a, r_b = oracle.reward(y, x_a), oracle.reward(y, x_b)
    if r_a == r_b:
        return None
    return (x_a, x_b) if r_a > r_b else (x_b, x_a)


def build_seed_dataset(
    oracle: GroundTruthOracle,
    base,
    prompts,
    pairs_per_prompt: int,
    schedule,
    sampler_cfg,
    rng: np.random.Generator,
    max_retries: int = 3,
) -> PreferenceDataset:
    """Sample two candidates per pair from ``base`` and label them with the oracle."""
    if pairs_per_prompt < 1:
        raise ConfigError("pairs_per_prompt must be >= 1", field="pairs_per_prompt")
    pairs = []
    for y in prompts:
        for _ in range(pairs_per_prompt):
            for _attempt in range(max_retries + 1):
                seeds = [int(s) for s in rng.integers(0, 2**63, size=2)]
                x_a, x_b = sample_batch(base, y, schedule, sampler_cfg, seeds)
                labelled = oracle_label(oracle, y, x_a, x_b)
                if labelled is not None:
                    pairs.append(PreferencePair(int(y), labelled[0], labelled[1], "seed", 0, 1.0))
                    break
            else:
                warnings.warn(f"oracle tie persisted for prompt {y}; pair skipped", RuntimeWarning, stacklevel=2)
    return PreferenceDataset(pairs)


def split_counts(alpha: float, target_size: int):
    """(generated, seed) counts with half-up rounding of ``alpha * target_size``."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}", field="alpha_mix")
    if target_size < 0:
        raise ConfigError("target_size must be >= 0", field="target_size")
    n_gen = int(math.floor(alpha * target_size + 0.5))
    return n_gen, target_size - n_gen


def _draw(ds: PreferenceDataset, k: int, rng, name: str) -> list:
    if k == 0:
        return []
    if len(ds) == 0:
        raise ConfigError(f"{name} dataset is empty but its mix share is nonzero", field=name)
    if k > len(ds):
        warnings.warn(
            f"{name} dataset has {len(ds)} pairs, fewer than the {k} requested; sampling with replacement",
            RuntimeWarning,
            stacklevel=3,
        )
        idx = rng.integers(0, len(ds), size=k)
    else:
        idx = rng.choice(len(ds), size=k, replace=False)
    return [ds[int(i)] for i in idx]


def mixup(
    generated: PreferenceDataset,
    seed: PreferenceDataset,
    alpha: float,
    target_size: int,
    rng: np.random.Generator,
) -> PreferenceDataset:
    """Compose a dataset with an ``alpha`` fraction of generated pairs, the rest seed pairs."""
    n_gen, n_seed = split_counts(alpha, target_size)
    picked = _draw(generated, n_gen, rng, "generated") + _draw(seed, n_seed, rng, "seed")
    order = rng.permutation(len(picked))
    return PreferenceDataset(picked[i] for i in order)


def external_reward_rank(
    oracle: GroundTruthOracle, cs: CandidateSet, strategy: str = "best_worst", rng=None, iteration: int = 0
) -> PreferencePair:
    """Same contract as self-reward ranking, but scored by the oracle."""
    if len(cs) < 2:
        raise ConfigError("need at least 2 candidates to form a pair", field="n_candidates")
    scores = oracle.reward(np.full(len(cs), cs.y), cs.samples)
    scored = CandidateSet(cs.y, cs.samples, cs.sub_seeds, scores, cs.iteration)
    winner, loser = select_pair(scores, strategy, rng)
    pair = pair_from_candidates(scored, winner, loser, iteration)
    return PreferencePair(pair.y, pair.x_w, pair.x_l, pair.source, pair.iteration, 1.0)


@dataclass(frozen=True)
class PromptBatch:
    batch_id: int
    tokens: tuple


class PromptPool:
    """Disjoint prompt batches ``Y_1..Y_T``.

    With only ``K`` tokens the same token necessarily recurs across
    iterations; disjointness is enforced on batch identifiers.
    """

    def __init__(self, vocab_size: int, sizes, rng: np.random.Generator):
        self.vocab_size = vocab_size
        self.batches = []
        for i, n in enumerate(sizes, start=1):
            if n < 1:
                raise ConfigError(f"prompt batch {i} must be non-empty", field="prompts_per_iter")
            tokens = np.arange(n) % vocab_size
            self.batches.append(PromptBatch(i, tuple(int(t) for t in rng.permutation(tokens))))
        ids = [b.batch_id for b in self.batches]
        assert len(set(ids)) == len(ids)

    def __getitem__(self, iteration: int) -> PromptBatch:
        return self.batches[iteration - 1]

    def __len__(self):
        return len(self.batches)
